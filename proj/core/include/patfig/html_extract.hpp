#ifndef PATFIG_HTML_EXTRACT_HPP
#define PATFIG_HTML_EXTRACT_HPP

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace patfig {

class BpeTokenizer;

enum class HtmlTag {
    BriefSection,          // brief-description-of-drawings
    DescriptionLine,       // description-line
    DescriptionParagraph,  // description-paragraph
    FigRef,                // figref
    Other,
};

/// Inline figure reference inside a block's text, by character offset.
struct FigRefSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string label;  // the reference's own text, e.g. "FIG. 2"
};

struct HtmlBlock {
    HtmlTag tag = HtmlTag::Other;
    std::string text;  // entity-decoded, whitespace-collapsed
    std::vector<FigRefSpan> figrefs;
    bool inside_brief_section = false;
    std::size_t position = 0;  // document order
};

struct PatentHtmlDoc {
    std::vector<HtmlBlock> blocks;
    std::vector<std::string> flags;  // e.g. "no-description-section"

    bool has_brief_section() const;
};

/// Tolerant scanner for the patent description markup: captures the four
/// recognized tags in document order, decodes entities, collapses
/// whitespace, and recovers from unclosed tags. Anything else passes
/// through as plain text. A document with none of the recognized tags
/// comes back empty, flagged "no-description-section".
PatentHtmlDoc parse_patent_html(const std::string& html_text);

/// Canonical figure-label form: uppercase, periods and whitespace removed,
/// "FIGURE" collapsed to "FIG"; "Fig. 2a" -> "FIG2A".
std::string normalize_figure_label(const std::string& label);

/// Sentence spans over text: boundaries at [.?!] runs followed by
/// whitespace and an uppercase letter, except after known abbreviations
/// ("FIG.", "No.", "U.S.", single initials, ...).
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(const std::string& text);
std::vector<std::string> split_sentences(const std::string& text);

/// Text of the brief-section child line/paragraph whose leading figure
/// label normalizes equal to figure_label. Throws when the section is
/// missing or no child matches (message carries the label).
std::string extract_brief(const PatentHtmlDoc& doc, const std::string& figure_label);

struct DetailedExtraction {
    std::map<std::string, std::string> by_label;  // normalized label -> text
    std::vector<std::string> unmatched_labels;    // requested, never referenced
    std::size_t total_paragraphs = 0;
    std::size_t paragraphs_attributed = 0;
    std::size_t paragraphs_dropped_before_first = 0;
    std::size_t paragraphs_discarded_multifig = 0;
    std::size_t sentences_discarded_multifig = 0;
    std::size_t trailing_paragraphs = 0;  // attributed after the last reference switch
};

/// Associate post-section paragraphs with figure labels. A paragraph whose
/// first sentence carries exactly one figure reference switches the current
/// label; reference-free paragraphs extend the current label; sentences
/// carrying two or more distinct references are discarded. Paragraphs seen
/// before any reference are dropped and tallied. Every paragraph lands in
/// exactly one of the attributed / dropped / discarded tallies.
DetailedExtraction extract_detailed(const PatentHtmlDoc& doc,
                                    const std::vector<std::string>& figure_labels);

/// Truncate to the first `limit` vocabulary tokens; shorter texts pass
/// through unchanged. Idempotent for a fixed tokenizer and limit.
std::string clip_detailed(const BpeTokenizer& tokenizer, const std::string& text,
                          std::size_t limit);

/// Sentence-level precision/recall between an extracted text and a gold
/// text: multiset intersection of normalized sentences (lowercased,
/// whitespace collapsed, terminal punctuation stripped). Both empty ->
/// (1, 1); one empty -> (0, 0).
std::pair<double, double> sentence_prf(const std::string& extracted, const std::string& gold);

struct UnmatchedLabel {
    std::string label;
    std::string reason;
};

struct ExtractionResult {
    struct Pair {
        std::string brief;
        std::string detailed;
    };
    std::map<std::string, Pair> by_label;  // normalized label -> descriptions
    std::vector<UnmatchedLabel> unmatched;
    DetailedExtraction detailed_diagnostics;
};

/// Full per-document extraction: brief and detailed text for each requested
/// label. Labels missing a brief or a detailed side are excluded and listed
/// with the side that failed.
ExtractionResult extract_descriptions(const PatentHtmlDoc& doc,
                                      const std::vector<std::string>& figure_labels);

}  // namespace patfig

#endif
