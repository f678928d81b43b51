#ifndef PATFIG_FIXTURES_HPP
#define PATFIG_FIXTURES_HPP

#include <cstdint>
#include <string>

namespace patfig {

/// What the generator wrote, for logging and test assertions.
struct FixtureSummary {
    std::size_t patents = 0;
    std::size_t figures = 0;          // manifest records, duplicates included
    std::size_t expected_kept = 0;    // records surviving every filter
    std::size_t expected_dropped = 0; // filter drops, dedupe removals excluded
    std::size_t duplicate_pairs = 0;
    std::size_t plot_figures = 0;
    std::size_t multi_figure_sheets = 0;
    std::size_t rotated_figures = 0;
    std::size_t pre_cutoff_patents = 0;
};

/// Write a deterministic synthetic patent corpus under out_dir:
///
///   patents/<patent>.html      source documents with the description markup
///   ocr/<figure>.json          OCR token files (plus .rotated.json passes)
///   elements/<figure>.json     element boxes; never empty
///   figures.jsonl              pre-extraction manifest (descriptions empty)
///   expected/extracted.jsonl   golden post-extraction manifest
///   expected/manifest.jsonl    golden post-preprocess manifest (kept records)
///   expected/drops.jsonl       golden drop report (figure_id, reason)
///   preds/identity_brief.jsonl predictions equal to the kept briefs
///
/// Every golden is derived from construction knowledge, not by running the
/// extraction or filter code. Identical (seed, patent_count) runs produce
/// byte-identical trees. Injected cases cycle deterministically: duplicate
/// representative sheets, plot figures, multi-label sheets, rotated OCR
/// passes, and pre-cutoff publication years.
FixtureSummary generate_fixture_corpus(std::uint64_t seed, std::size_t patent_count,
                                       const std::string& out_dir);

}  // namespace patfig

#endif
