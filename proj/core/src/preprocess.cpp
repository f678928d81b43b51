#include "patfig/preprocess.hpp"

#include <algorithm>
#include <cctype>

#include "patfig/html_extract.hpp"
#include "patfig/util.hpp"

namespace patfig {

namespace {

double average_token_length(const std::vector<OcrToken>& ocr) {
    if (ocr.empty()) {
        return 0.0;
    }
    std::size_t chars = 0;
    for (const OcrToken& token : ocr) {
        chars += token.text.size();
    }
    return static_cast<double>(chars) / ocr.size();
}

/// "FIG" or "FIGURE" (any case) with an optional trailing period, nothing
/// else. Consumes the prefix; on success `rest` points past it.
bool match_fig_word(const std::string& text, std::size_t& rest) {
    std::size_t i = 0;
    std::string word;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
        word += static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
        ++i;
    }
    if (word != "FIG" && word != "FIGURE") {
        return false;
    }
    if (i < text.size() && text[i] == '.') {
        ++i;
    }
    rest = i;
    return true;
}

/// Digits plus at most one trailing letter, the whole string.
bool match_label_number(const std::string& text, std::size_t from = 0) {
    std::size_t i = from;
    std::size_t digits = 0;
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
        ++i;
        ++digits;
    }
    if (digits == 0) {
        return false;
    }
    if (i < text.size()) {
        if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
            return false;
        }
        ++i;
    }
    return i == text.size();
}

}  // namespace

OrientationDecision decide_orientation(const std::vector<OcrToken>& ocr_original,
                                       const std::vector<OcrToken>& ocr_rotated) {
    OrientationDecision decision;
    decision.avg_len_original = average_token_length(ocr_original);
    decision.avg_len_rotated = average_token_length(ocr_rotated);
    decision.choice = decision.avg_len_rotated > decision.avg_len_original
                          ? Orientation::Rotated90
                          : Orientation::Original;
    return decision;
}

std::vector<std::string> extract_figure_labels(const std::vector<OcrToken>& ocr) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < ocr.size(); ++i) {
        const std::string& text = ocr[i].text;
        std::size_t rest = 0;
        if (!match_fig_word(text, rest)) {
            continue;
        }
        if (rest == text.size()) {
            // Two-token form: the number follows in the next token.
            if (i + 1 < ocr.size() && match_label_number(ocr[i + 1].text)) {
                labels.push_back(normalize_figure_label(text + ocr[i + 1].text));
                ++i;
            }
        } else if (match_label_number(text, rest)) {
            labels.push_back(normalize_figure_label(text));
        }
    }
    return labels;
}

bool detect_multi_figure(const std::vector<OcrToken>& ocr) {
    std::vector<std::string> labels = extract_figure_labels(ocr);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels.size() >= 2;
}

std::vector<PatentFigure> dedupe_representative(const std::vector<PatentFigure>& figures) {
    const std::size_t n = figures.size();
    std::vector<bool> removed(n, false);
    std::vector<bool> keeper(n, false);  // survives as the later copy of a pair

    auto same_key = [&](std::size_t a, std::size_t b) {
        // The duplicate heuristic is label-based; unlabeled figures never pair.
        return figures[a].figure_label.has_value() && figures[b].figure_label.has_value() &&
               *figures[a].figure_label == *figures[b].figure_label &&
               figures[a].image_width == figures[b].image_width &&
               figures[a].image_height == figures[b].image_height;
    };

    for (std::size_t i = 0; i < n; ++i) {
        if (removed[i] || keeper[i]) {
            continue;
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!removed[j] && !keeper[j] && same_key(i, j)) {
                removed[i] = true;
                keeper[j] = true;
                break;
            }
        }
    }

    std::vector<PatentFigure> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!removed[i]) {
            kept.push_back(figures[i]);
        }
    }
    return kept;
}

FilterResult filter_corpus(const std::vector<PatentFigure>& figures, int min_year) {
    if (min_year < 0) {
        throw Error("minimum publication year cannot be negative");
    }
    FilterResult result;
    for (const PatentFigure& figure : figures) {
        if (figure.publication_year < min_year) {
            result.dropped.push_back({figure.figure_id, "date"});
        } else if (figure.is_plot) {
            result.dropped.push_back({figure.figure_id, "plot"});
        } else if (detect_multi_figure(figure.ocr_tokens)) {
            result.dropped.push_back({figure.figure_id, "multi_figure"});
        } else {
            result.kept.push_back(figure);
        }
    }
    return result;
}

}  // namespace patfig
