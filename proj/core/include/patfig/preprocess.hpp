#ifndef PATFIG_PREPROCESS_HPP
#define PATFIG_PREPROCESS_HPP

#include <string>
#include <utility>
#include <vector>

#include "patfig/corpus.hpp"

namespace patfig {

enum class Orientation { Original, Rotated90 };

struct OrientationDecision {
    Orientation choice = Orientation::Original;
    double avg_len_original = 0.0;
    double avg_len_rotated = 0.0;
};

/// Keep whichever OCR pass reads better: mean characters per token decides,
/// ties (and two empty passes) keep the original. Rotated wins only on a
/// strictly greater average.
OrientationDecision decide_orientation(const std::vector<OcrToken>& ocr_original,
                                       const std::vector<OcrToken>& ocr_rotated);

/// Normalized figure labels found in the OCR tokens, in reading order.
/// Matches a "FIG"/"FIGURE" token (optional period) followed by a
/// number-with-optional-letter token, or both parts fused in one token.
std::vector<std::string> extract_figure_labels(const std::vector<OcrToken>& ocr);

/// True when the OCR carries two or more distinct figure labels. Repeats of
/// one label (header plus margin) do not count.
bool detect_multi_figure(const std::vector<OcrToken>& ocr);

/// Remove the earlier of each duplicated (figure_label, dimensions) pair
/// within one patent's document-ordered figures; the later copy survives.
/// Figures with a unique key, or with no label at all, are never removed.
std::vector<PatentFigure> dedupe_representative(const std::vector<PatentFigure>& figures);

struct DroppedFigure {
    std::string figure_id;
    std::string reason;  // "date", "plot", or "multi_figure"
};

struct FilterResult {
    std::vector<PatentFigure> kept;
    std::vector<DroppedFigure> dropped;
};

/// Drop figures published before min_year, flagged as plots, or showing
/// multiple distinct figure labels. One reason per drop, checked in that
/// order.
FilterResult filter_corpus(const std::vector<PatentFigure>& figures, int min_year);

}  // namespace patfig

#endif
