#include "patfig/losses.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "patfig/util.hpp"

namespace patfig {

namespace {

double floored_log(double p, std::size_t& clamped) {
    if (p < kProbabilityFloor) {
        ++clamped;
        p = kProbabilityFloor;
    }
    return std::log(p);
}

void check_shape(std::size_t rows, std::size_t cols, std::size_t actual, const char* what) {
    if (actual != rows * cols) {
        std::ostringstream msg;
        msg << what << " storage holds " << actual << " values, expected " << rows << " x "
            << cols;
        throw Error(msg.str());
    }
}

}  // namespace

double CategoricalPredictions::at(std::size_t position, std::size_t entry) const {
    return probabilities[position * vocab_size + entry];
}

void CategoricalPredictions::validate() const {
    check_shape(position_count, vocab_size, probabilities.size(), "categorical prediction");
    for (std::size_t i = 0; i < position_count; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < vocab_size; ++j) {
            const double p = at(i, j);
            if (!(p >= 0.0 && p <= 1.0)) {
                std::ostringstream msg;
                msg << "probability out of [0, 1] at position " << i << ", entry " << j;
                throw Error(msg.str());
            }
            row_sum += p;
        }
        if (std::abs(row_sum - 1.0) > 1e-6) {
            std::ostringstream msg;
            msg << "position " << i << " probabilities sum to " << row_sum;
            throw Error(msg.str());
        }
    }
}

LossResult masked_nll(const CategoricalPredictions& predictions,
                      const std::vector<std::size_t>& positions,
                      const std::vector<std::size_t>& targets, LossReduction reduction) {
    predictions.validate();
    if (positions.size() != targets.size()) {
        throw Error("masked positions and targets differ in length");
    }
    LossResult result;
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const std::size_t pos = positions[k];
        const std::size_t target = targets[k];
        if (pos >= predictions.position_count) {
            throw Error("masked position out of range");
        }
        if (target >= predictions.vocab_size) {
            throw Error("target entry out of range");
        }
        result.value -= floored_log(predictions.at(pos, target), result.clamped_terms);
    }
    if (reduction == LossReduction::PositionMean && !positions.empty()) {
        result.value /= static_cast<double>(positions.size());
    }
    return result;
}

double PatchClassPredictions::at(std::size_t patch, std::size_t cls) const {
    return probabilities[patch * class_count + cls];
}

void PatchClassPredictions::validate() const {
    check_shape(patch_count, class_count, probabilities.size(), "patch class prediction");
    for (double p : probabilities) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error("patch class probability out of [0, 1]");
        }
    }
}

LossResult patch_class_loss(const PatchClassPredictions& predictions,
                            const std::vector<std::vector<std::uint8_t>>& targets) {
    if (predictions.patch_count == 0) {
        throw Error("patch class loss needs at least one patch");
    }
    if (targets.size() != predictions.patch_count) {
        throw Error("patch label rows do not match prediction patches");
    }
    LossResult result;
    for (std::size_t i = 0; i < predictions.patch_count; ++i) {
        if (targets[i].size() != predictions.class_count) {
            throw Error("patch label columns do not match prediction classes");
        }
        for (std::size_t j = 0; j < predictions.class_count; ++j) {
            if (targets[i][j] > 1) {
                throw Error("patch labels must be 0 or 1");
            }
            const double p = predictions.at(i, j);
            if (targets[i][j] != 0) {
                result.value -= floored_log(p, result.clamped_terms);
            } else {
                result.value -= floored_log(1.0 - p, result.clamped_terms);
            }
        }
    }
    result.value /= static_cast<double>(predictions.patch_count);
    return result;
}

std::vector<double> masked_nll_logit_gradient(const CategoricalPredictions& predictions,
                                              const std::vector<std::size_t>& positions,
                                              const std::vector<std::size_t>& targets) {
    if (positions.size() != targets.size()) {
        throw Error("masked positions and targets differ in length");
    }
    std::vector<double> grad(predictions.probabilities.size(), 0.0);
    for (std::size_t k = 0; k < positions.size(); ++k) {
        const std::size_t pos = positions[k];
        const std::size_t target = targets[k];
        if (pos >= predictions.position_count || target >= predictions.vocab_size) {
            throw Error("masked position or target out of range");
        }
        double* row = grad.data() + pos * predictions.vocab_size;
        for (std::size_t j = 0; j < predictions.vocab_size; ++j) {
            row[j] += predictions.at(pos, j);
        }
        row[target] -= 1.0;
    }
    return grad;
}

std::vector<double> patch_class_logit_gradient(
    const PatchClassPredictions& predictions,
    const std::vector<std::vector<std::uint8_t>>& targets) {
    if (predictions.patch_count == 0) {
        throw Error("patch class gradient needs at least one patch");
    }
    if (targets.size() != predictions.patch_count) {
        throw Error("patch label rows do not match prediction patches");
    }
    std::vector<double> grad(predictions.probabilities.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(predictions.patch_count);
    for (std::size_t i = 0; i < predictions.patch_count; ++i) {
        if (targets[i].size() != predictions.class_count) {
            throw Error("patch label columns do not match prediction classes");
        }
        for (std::size_t j = 0; j < predictions.class_count; ++j) {
            if (targets[i][j] > 1) {
                throw Error("patch labels must be 0 or 1");
            }
            const double y = targets[i][j] != 0 ? 1.0 : 0.0;
            grad[i * predictions.class_count + j] = (predictions.at(i, j) - y) * scale;
        }
    }
    return grad;
}

CategoricalPredictions softmax_rows(std::size_t position_count, std::size_t vocab_size,
                                    const std::vector<double>& logits) {
    check_shape(position_count, vocab_size, logits.size(), "logit");
    if (vocab_size == 0) {
        throw Error("softmax needs a non-empty vocabulary");
    }
    CategoricalPredictions out;
    out.position_count = position_count;
    out.vocab_size = vocab_size;
    out.probabilities.resize(logits.size());
    for (std::size_t i = 0; i < position_count; ++i) {
        const double* row = logits.data() + i * vocab_size;
        double* dst = out.probabilities.data() + i * vocab_size;
        const double row_max = *std::max_element(row, row + vocab_size);
        double sum = 0.0;
        for (std::size_t j = 0; j < vocab_size; ++j) {
            dst[j] = std::exp(row[j] - row_max);
            sum += dst[j];
        }
        for (std::size_t j = 0; j < vocab_size; ++j) {
            dst[j] /= sum;
        }
    }
    return out;
}

PatchClassPredictions sigmoid_rows(std::size_t patch_count, std::size_t class_count,
                                   const std::vector<double>& logits) {
    check_shape(patch_count, class_count, logits.size(), "logit");
    PatchClassPredictions out;
    out.patch_count = patch_count;
    out.class_count = class_count;
    out.probabilities.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.probabilities[i] = 1.0 / (1.0 + std::exp(-logits[i]));
    }
    return out;
}

}  // namespace patfig
