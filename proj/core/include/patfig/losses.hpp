#ifndef PATFIG_LOSSES_HPP
#define PATFIG_LOSSES_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace patfig {

/// Probability floor applied before any log; keeps losses finite on
/// degenerate inputs. Every clamp is counted so callers can tell exact
/// results from floored ones.
inline constexpr double kProbabilityFloor = 1e-7;

/// How masked-position losses are reduced across positions.
enum class LossReduction {
    Sum,           // plain sum over masked positions
    PositionMean,  // sum divided by the number of masked positions
};

/// Per-position categorical distributions over a fixed vocabulary, stored
/// row-major: probabilities[i * vocab_size + j].
struct CategoricalPredictions {
    std::size_t position_count = 0;
    std::size_t vocab_size = 0;
    std::vector<double> probabilities;

    double at(std::size_t position, std::size_t entry) const;
    void validate() const;  // shape and row-sum checks (rows sum to 1 within 1e-6)
};

struct LossResult {
    double value = 0.0;
    std::size_t clamped_terms = 0;  // log arguments that hit kProbabilityFloor
};

/// Negative log-likelihood of the target entries at the masked positions.
/// targets[k] is the correct vocabulary entry for masked position
/// positions[k]. Shared by the text and image objectives, which differ only
/// in what the vocabulary indexes (subword tokens vs. visual codebook
/// entries). Predictions are validated on entry.
LossResult masked_nll(const CategoricalPredictions& predictions,
                      const std::vector<std::size_t>& positions,
                      const std::vector<std::size_t>& targets,
                      LossReduction reduction = LossReduction::Sum);

/// Per-patch independent class probabilities, row-major:
/// probabilities[i * class_count + j] in [0, 1]; no row-sum constraint.
struct PatchClassPredictions {
    std::size_t patch_count = 0;
    std::size_t class_count = 0;
    std::vector<double> probabilities;

    double at(std::size_t patch, std::size_t cls) const;
    void validate() const;
};

/// Mean over patches of the summed per-class binary cross-entropy:
/// -(1/M) * sum_i sum_j [y_ij log p_ij + (1 - y_ij) log(1 - p_ij)].
LossResult patch_class_loss(const PatchClassPredictions& predictions,
                            const std::vector<std::vector<std::uint8_t>>& targets);

/// Gradient of masked_nll with Sum reduction, taken with respect to the
/// logits of a softmax that produced `predictions`: p - onehot(target) at
/// each masked position, zero elsewhere. Same layout as predictions.
std::vector<double> masked_nll_logit_gradient(const CategoricalPredictions& predictions,
                                              const std::vector<std::size_t>& positions,
                                              const std::vector<std::size_t>& targets);

/// Gradient of patch_class_loss with respect to the per-class logits of the
/// sigmoid that produced `predictions`: (p_ij - y_ij) / M. Same layout as
/// predictions.
std::vector<double> patch_class_logit_gradient(
    const PatchClassPredictions& predictions,
    const std::vector<std::vector<std::uint8_t>>& targets);

/// Row-wise softmax over logits, same layout conventions as
/// CategoricalPredictions. Numerically stabilised by row-max subtraction.
CategoricalPredictions softmax_rows(std::size_t position_count, std::size_t vocab_size,
                                    const std::vector<double>& logits);

/// Element-wise logistic sigmoid over logits for patch-class predictions.
PatchClassPredictions sigmoid_rows(std::size_t patch_count, std::size_t class_count,
                                   const std::vector<double>& logits);

}  // namespace patfig

#endif
