#ifndef PATFIG_METRICS_HPP
#define PATFIG_METRICS_HPP

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "patfig/corpus.hpp"

namespace patfig {

/// Evaluation tokenization: lowercase, punctuation split into standalone
/// tokens, then whitespace split. Deterministic; shared by every metric.
std::vector<std::string> metric_tokenize(const std::string& text);

/// Identifier recorded in reports so scores are comparable across runs.
inline constexpr const char* kMetricTokenizerId = "lower-punct-ws";

struct BleuOptions {
    bool smooth_higher_orders = false;  // add-one smoothing for orders > 1
};

/// Sentence-level BLEU-n: geometric mean of clipped i-gram precisions for
/// i = 1..n times the brevity penalty min(1, exp(1 - ref_len/cand_len)).
/// Empty candidate scores 0. Requires n >= 1.
double bleu_n(const std::string& candidate, const std::string& reference, int n,
              const BleuOptions& options = {});

/// Mean of BLEU-1 through BLEU-4.
double avg_bleu(const std::string& candidate, const std::string& reference,
                const BleuOptions& options = {});

/// F1 over clipped n-gram multiset overlap. Both texts shorter than n
/// score 0. Requires n >= 1.
double rouge_n(const std::string& candidate, const std::string& reference, int n);

/// Longest-common-subsequence F1: P = lcs/|cand|, R = lcs/|ref|,
/// F = 2PR/(P+R), 0 when both are 0.
double rouge_l(const std::string& candidate, const std::string& reference);

struct MeteorOptions {
    bool stem_matching = true;  // second alignment stage after exact matches
};

/// Unigram alignment score: exact matches first, then stem matches;
/// F_mean = 10PR/(R+9P), fragmentation penalty 0.5*(chunks/matches)^3,
/// score = F_mean*(1-penalty). No matches scores 0.
double meteor(const std::string& candidate, const std::string& reference,
              const MeteorOptions& options = {});

/// Light suffix-stripping stemmer backing meteor's second stage. Applies at
/// most one rule, longest suffix first.
std::string stem_token(const std::string& token);

struct MetricReport {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    double b4 = 0.0;
    double avg_b = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    double rl = 0.0;
    double meteor = 0.0;
    std::size_t sample_count = 0;
    std::string tokenizer_id = kMetricTokenizerId;
    std::string meteor_variant = "meteor-es";
    bool smoothing = false;
    bool sentence_level_bleu = false;
};

enum class EvalField { Brief, Detailed };

struct EvalOptions {
    EvalField field = EvalField::Brief;
    BleuOptions bleu;
    MeteorOptions meteor;
    /// Corpus BLEU aggregates clipped counts before the geometric mean;
    /// the sentence-level switch averages per-pair scores instead.
    bool sentence_level_bleu = false;
    /// When set, only records of this split are scored; predictions for
    /// records of other splits are warned about and skipped.
    std::optional<Split> split;
    std::vector<std::string>* warnings = nullptr;  // extra-prediction notices
};

/// Score predictions against manifest references. A prediction id absent
/// from the manifest means its reference is missing: error listing the ids.
/// Manifest records without predictions are skipped. Scores are in [0,1];
/// render ×100 for table-style output.
MetricReport evaluate_corpus(const std::map<std::string, std::string>& predictions,
                             const CorpusManifest& manifest, const EvalOptions& options = {});

/// Round to 2 decimals after scaling to [0,100], the table rendering rule.
double render_score(double score01);

/// Serialize a report as pretty JSON (scores ×100, 2 decimals).
std::string report_to_json(const MetricReport& report);

/// Line-delimited {"figure_id": ..., "text": ...} predictions file.
std::map<std::string, std::string> load_predictions(const std::string& path);

}  // namespace patfig

#endif
