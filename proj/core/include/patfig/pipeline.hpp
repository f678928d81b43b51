#ifndef PATFIG_PIPELINE_HPP
#define PATFIG_PIPELINE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "patfig/corpus.hpp"
#include "patfig/geometry.hpp"
#include "patfig/judge.hpp"
#include "patfig/masking.hpp"
#include "patfig/metrics.hpp"

namespace patfig {

class BpeTokenizer;

/// Structured log sink; each call receives one serialized JSON object.
using LogFn = std::function<void(const std::string& event)>;

struct GridConfig {
    int height = 384;
    int width = 384;
    int patch_size = 16;
};

struct EvalStageConfig {
    EvalField field = EvalField::Brief;
    bool smoothing = false;
    bool sentence_level_bleu = false;
    bool meteor_stem = true;
    /// Detailed references are truncated to this many vocabulary tokens
    /// before scoring; 0 disables the cap. Brief scoring ignores it.
    std::size_t detailed_reference_cap = 500;
    std::optional<Split> split;  // score only this split when set
};

struct JudgeStageConfig {
    std::string endpoint;
    std::string model = "gpt-4-vision-preview";
    std::string prompt_dir;
    int max_retries = 2;
    double temperature = 0.0;
    std::size_t sample_limit = 0;  // 0 judges every scored pair
    std::uint64_t sample_seed = 0;
};

struct PipelinePaths {
    std::string corpus_dir;
    std::string out_dir;
    std::string predictions;  // optional; eval and judge need it
};

/// One declarative file drives a whole run; all randomness flows from the
/// single seed. Flag overrides happen before validate().
struct PipelineConfig {
    std::string vocab_path;
    GridConfig grid;
    double token_mask_ratio = 0.30;
    double patch_mask_ratio = 0.40;
    PatchPool patch_pool = PatchPool::ElementBearing;
    std::uint64_t seed = 0;
    int min_publication_year = 2005;
    std::size_t workers = 1;
    EvalStageConfig eval;
    JudgeStageConfig judge;
    PipelinePaths paths;

    static PipelineConfig from_json_text(const std::string& text, const std::string& origin);
    static PipelineConfig from_file(const std::string& path);

    /// Configuration errors surface here, before any stage touches disk.
    void validate() const;
};

enum class Stage { Extract, Preprocess, MaskPlan, Labels, Stats, Eval, Judge };

const char* to_string(Stage s);
Stage stage_from_string(const std::string& name);

/// Everything except Judge, which needs a transport and is opt-in.
std::vector<Stage> default_stages();

struct StageOutcome {
    Stage stage = Stage::Extract;
    bool ran = false;
    std::string skip_reason;  // set when !ran
    std::size_t items = 0;
    double elapsed_ms = 0.0;
};

struct PipelineResult {
    std::vector<StageOutcome> outcomes;
};

struct RunOptions {
    std::vector<Stage> stages;                 // empty means default_stages()
    LogFn log;                                 // optional event sink
    ChatTransport* judge_transport = nullptr;  // injected for offline runs
    bool force = false;                        // ignore up-to-date checks
};

/// Run the requested stages in dependency order against config.paths.
/// Stages whose outputs are newer than their inputs are skipped; a stage
/// failure halts everything downstream. Identical config and inputs give
/// byte-identical artifacts, whatever the worker count.
PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

// Stage bodies, shared between run_pipeline and the one-shot subcommands.
// Each reads and writes exactly the paths it is given; no implicit layout.

struct ExtractStageReport {
    std::size_t patents = 0;
    std::size_t figures = 0;
    std::size_t extracted = 0;
    std::size_t incomplete = 0;  // records excluded for a missing side
};

/// Fill brief/detailed descriptions from patents/<id>.html documents.
/// Records whose label cannot be matched are left out of the output
/// manifest and recorded in that patent's diagnostics file.
ExtractStageReport extract_stage(const std::string& figures_manifest,
                                 const std::string& html_dir, const std::string& out_manifest,
                                 const std::string& diagnostics_dir,
                                 const BpeTokenizer& tokenizer, std::size_t workers);

struct PreprocessStageReport {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t dedupe_removed = 0;
    std::size_t filtered = 0;
    std::size_t rotated = 0;  // figures whose rotated OCR pass won
};

/// Orientation choice, per-patent representative dedupe, then the
/// date / plot / multi-figure filter. Drop report lines carry
/// {figure_id, reason}; orientation report lines cover every record that
/// had a second OCR pass.
PreprocessStageReport preprocess_stage(const std::string& manifest_path, int min_year,
                                       const std::string& out_manifest,
                                       const std::string& drops_path,
                                       const std::string& orientation_path,
                                       const BpeTokenizer& tokenizer, std::size_t workers);

struct MaskPlanStageReport {
    std::size_t figures = 0;
    std::size_t masked_tokens = 0;
    std::size_t masked_patches = 0;
};

/// One mask-plan line per manifest record:
/// {figure_id, seed, t_m, r_m, eligible_count, token_count}.
MaskPlanStageReport mask_plan_stage(const std::string& manifest_path, const PatchGrid& grid,
                                    double token_ratio, double patch_ratio, std::uint64_t seed,
                                    PatchPool pool, const std::string& out_path,
                                    const BpeTokenizer& tokenizer, std::size_t workers);

struct LabelsStageReport {
    std::size_t figures = 0;
    std::size_t labeled_patches = 0;
};

/// One line per record: multi-hot element-category labels for every patch.
LabelsStageReport labels_stage(const std::string& manifest_path, const PatchGrid& grid,
                               const std::string& out_path, const BpeTokenizer& tokenizer,
                               std::size_t workers);

struct StatsStageReport {
    std::size_t figures = 0;
};

/// Per-split corpus statistics (image and patent counts, average token
/// lengths, images per patent). Fails when a patent spans two splits.
StatsStageReport stats_stage(const std::string& manifest_path, const BpeTokenizer& tokenizer,
                             const std::string& out_path);

struct EvalStageReport {
    std::size_t scored = 0;
    std::vector<std::string> warnings;
};

/// Score a predictions file against manifest references and write the
/// metric report JSON.
EvalStageReport eval_stage(const std::string& manifest_path, const std::string& preds_path,
                           const EvalStageConfig& config, const BpeTokenizer& tokenizer,
                           const std::string& out_path);

struct JudgeStageReport {
    std::size_t samples = 0;
    std::size_t degraded = 0;  // samples with at least one failed variant
};

/// Judge each prediction against its reference over all prompt variants and
/// write per-sample averaged scores plus a final corpus-mean row. Image
/// references come from the optional images file ({figure_id, url} lines);
/// records without one pass the figure id through.
JudgeStageReport judge_stage(const std::string& manifest_path, const std::string& preds_path,
                             const std::string& images_path, DescriptionKind kind,
                             ChatTransport& transport, const JudgeStageConfig& config,
                             const std::string& out_path, const BpeTokenizer& tokenizer,
                             std::size_t workers);

}  // namespace patfig

#endif
