#ifndef PATFIG_CORPUS_HPP
#define PATFIG_CORPUS_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "patfig/geometry.hpp"

namespace patfig {

class BpeTokenizer;

struct OcrToken {
    std::string text;
    BoundingBox box;
    int segment_id = 0;  // OCR line/segment grouping, stable within one figure
};

/// Visual element classes a detector labels on a patent figure.
enum class ElementCategory { Node, NodeLabel, FigureLabel, Text, Arrow };

inline constexpr int kElementCategoryCount = 5;
inline constexpr std::array<ElementCategory, kElementCategoryCount> kAllElementCategories = {
    ElementCategory::Node, ElementCategory::NodeLabel, ElementCategory::FigureLabel,
    ElementCategory::Text, ElementCategory::Arrow};

const char* to_string(ElementCategory c);
ElementCategory element_category_from_string(const std::string& s);

struct ElementBox {
    ElementCategory category = ElementCategory::Node;
    BoundingBox box;
    double confidence = 1.0;  // in [0, 1]
};

struct PatentFigure {
    std::string patent_id;
    std::string figure_id;
    std::optional<std::string> figure_label;  // e.g. "FIG. 2"
    int image_width = 0;
    int image_height = 0;
    std::vector<OcrToken> ocr_tokens;
    std::vector<ElementBox> element_boxes;
    bool is_plot = false;
    int publication_year = 0;
};

struct DescriptionPair {
    std::string brief;
    std::string detailed;
    std::size_t brief_token_count = 0;
    std::size_t detailed_token_count = 0;
};

enum class Split { Train, Validation, Test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// One manifest line: a figure reference, its descriptions, and its split.
/// ocr_path / elements_path are stored as written; resolve against the
/// manifest's own directory when relative.
struct ManifestRecord {
    std::string patent_id;
    std::string figure_id;
    std::optional<std::string> figure_label;
    int image_width = 0;
    int image_height = 0;
    Split split = Split::Train;
    DescriptionPair descriptions;
    std::string ocr_path;
    std::string elements_path;
    std::optional<std::string> ocr_rotated_path;  // second OCR pass, when available
    bool is_plot = false;
    int publication_year = 0;
};

struct CorpusManifest {
    std::vector<ManifestRecord> records;
    std::string base_dir;  // directory of the manifest file, for path resolution

    std::string resolve_path(const std::string& path) const;
};

/// Line-delimited JSON, one record per line. Token counts are recomputed with
/// the given tokenizer. Throws on malformed lines (naming the line number)
/// and on duplicate figure ids (naming the id).
CorpusManifest load_manifest(const std::string& path, const BpeTokenizer& tokenizer);
void save_manifest(const CorpusManifest& manifest, const std::string& path);

std::vector<OcrToken> load_ocr_file(const std::string& path);
std::vector<ElementBox> load_elements_file(const std::string& path);
void save_ocr_file(const std::vector<OcrToken>& tokens, const std::string& path);
void save_elements_file(const std::vector<ElementBox>& elements, const std::string& path);

/// Per-split corpus statistics. Averages are undefined (and flagged) when the
/// split is empty.
struct SplitStats {
    std::size_t image_count = 0;
    std::size_t unique_patents = 0;
    double avg_brief_tokens = 0.0;
    double avg_detailed_tokens = 0.0;
    double avg_images_per_patent = 0.0;
    bool averages_defined = false;
};

struct CorpusStats {
    SplitStats train;
    SplitStats validation;
    SplitStats test;

    const SplitStats& for_split(Split s) const;
};

/// Arithmetic means over the manifest's records. Throws on an empty manifest;
/// an empty split yields a zero-count row with averages_defined = false.
CorpusStats compute_stats(const CorpusManifest& manifest);

/// Patents contributing figures to train and to validation or test.
/// Empty result means the split-exclusivity guarantee holds. Sorted.
std::vector<std::string> check_split_exclusivity(const CorpusManifest& manifest);

}  // namespace patfig

#endif
