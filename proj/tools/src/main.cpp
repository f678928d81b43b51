#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "patfig/corpus.hpp"
#include "patfig/fixtures.hpp"
#include "patfig/geometry.hpp"
#include "patfig/judge.hpp"
#include "patfig/losses.hpp"
#include "patfig/masking.hpp"
#include "patfig/metrics.hpp"
#include "patfig/pipeline.hpp"
#include "patfig/tokenizer.hpp"
#include "patfig/util.hpp"

#ifndef PATFIG_DATA_DIR
#define PATFIG_DATA_DIR ""
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Exit codes: 0 success, 1 usage (from the parser), 2 data or configuration
// error, 3 unexpected failure.
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

std::string default_vocab_path() {
    const std::string data_dir = PATFIG_DATA_DIR;
    return data_dir.empty() ? std::string() : data_dir + "/vocab.json";
}

std::string default_prompt_dir() {
    const std::string data_dir = PATFIG_DATA_DIR;
    return data_dir.empty() ? std::string() : data_dir + "/judge_prompts";
}

patfig::BpeTokenizer load_tokenizer(const std::string& vocab) {
    if (vocab.empty()) {
        throw patfig::Error("no vocabulary file given and no default is compiled in");
    }
    return patfig::BpeTokenizer::from_file(vocab);
}

patfig::EvalField parse_field(const std::string& field) {
    if (field == "brief") return patfig::EvalField::Brief;
    if (field == "detailed") return patfig::EvalField::Detailed;
    throw patfig::Error("field must be \"brief\" or \"detailed\", got \"" + field + "\"");
}

patfig::PatchPool parse_pool(const std::string& pool) {
    if (pool == "element_bearing") return patfig::PatchPool::ElementBearing;
    if (pool == "all") return patfig::PatchPool::All;
    throw patfig::Error("pool must be \"element_bearing\" or \"all\", got \"" + pool + "\"");
}

void emit_log_line(const std::string& event) { std::cerr << event << '\n'; }

struct GridFlags {
    int height = 384;
    int width = 384;
    int patch_size = 16;

    void attach(CLI::App* cmd) {
        cmd->add_option("--height", height, "Image height in pixels")->capture_default_str();
        cmd->add_option("--width", width, "Image width in pixels")->capture_default_str();
        cmd->add_option("--patch-size", patch_size, "Patch side length in pixels")
            ->capture_default_str();
    }

    patfig::PatchGrid build() const { return patfig::build_patch_grid(height, width, patch_size); }
};

json tensor_json(const std::string& path) {
    json parsed = json::parse(patfig::read_text_file(path), nullptr, false);
    if (parsed.is_discarded()) {
        throw patfig::Error("invalid JSON in " + path);
    }
    return parsed;
}

int run_losses(const std::string& preds_path, const std::string& kind,
               const std::string& reduction, bool with_gradient) {
    const json tensor = tensor_json(preds_path);
    const auto shape = tensor.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) {
        throw patfig::Error("shape must have exactly two entries, rows and columns");
    }
    const auto values = tensor.at("values").get<std::vector<double>>();

    json out;
    out["kind"] = kind;
    std::vector<double> gradient;

    if (kind == "mlm" || kind == "lamim") {
        patfig::CategoricalPredictions preds;
        preds.position_count = shape[0];
        preds.vocab_size = shape[1];
        preds.probabilities = values;
        const auto targets = tensor.at("targets").get<std::vector<std::size_t>>();
        std::vector<std::size_t> positions;
        if (tensor.contains("positions")) {
            positions = tensor["positions"].get<std::vector<std::size_t>>();
        } else {
            positions.resize(preds.position_count);
            for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
        }
        const patfig::LossReduction red = reduction == "position-mean"
                                              ? patfig::LossReduction::PositionMean
                                              : patfig::LossReduction::Sum;
        const patfig::LossResult result = patfig::masked_nll(preds, positions, targets, red);
        out["loss"] = result.value;
        out["clamped_terms"] = result.clamped_terms;
        out["reduction"] = reduction;
        if (with_gradient) {
            gradient = patfig::masked_nll_logit_gradient(preds, positions, targets);
        }
    } else if (kind == "pc") {
        patfig::PatchClassPredictions preds;
        preds.patch_count = shape[0];
        preds.class_count = shape[1];
        preds.probabilities = values;
        const auto flat = tensor.at("targets").get<std::vector<int>>();
        if (flat.size() != shape[0] * shape[1]) {
            throw patfig::Error("targets must hold shape[0]*shape[1] binary entries");
        }
        std::vector<std::vector<std::uint8_t>> targets(shape[0]);
        for (std::size_t i = 0; i < shape[0]; ++i) {
            targets[i].resize(shape[1]);
            for (std::size_t j = 0; j < shape[1]; ++j) {
                const int bit = flat[i * shape[1] + j];
                if (bit != 0 && bit != 1) {
                    throw patfig::Error("pc targets must be 0 or 1");
                }
                targets[i][j] = static_cast<std::uint8_t>(bit);
            }
        }
        const patfig::LossResult result = patfig::patch_class_loss(preds, targets);
        out["loss"] = result.value;
        out["clamped_terms"] = result.clamped_terms;
        if (with_gradient) {
            gradient = patfig::patch_class_logit_gradient(preds, targets);
        }
    } else {
        throw patfig::Error("kind must be mlm, lamim, or pc, got \"" + kind + "\"");
    }

    if (with_gradient) {
        double l1 = 0.0;
        double sum = 0.0;
        for (double g : gradient) {
            l1 += g < 0 ? -g : g;
            sum += g;
        }
        out["gradient_entries"] = gradient.size();
        out["gradient_l1"] = l1;
        out["gradient_sum"] = sum;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patent-figure description corpus toolkit"};
    app.require_subcommand(1);

    std::string vocab = default_vocab_path();
    app.add_option("--vocab", vocab, "Byte-pair vocabulary file")->capture_default_str();
    std::size_t workers = 1;
    app.add_option("--workers", workers, "Worker threads for per-figure stages")
        ->capture_default_str();

    // fixtures
    auto* fixtures_cmd = app.add_subcommand("fixtures", "Generate a synthetic test corpus");
    std::string fixtures_out;
    std::uint64_t fixtures_seed = 0;
    std::size_t fixtures_patents = 5;
    fixtures_cmd->add_option("--out", fixtures_out, "Output corpus directory")->required();
    fixtures_cmd->add_option("--seed", fixtures_seed, "Generator seed")->capture_default_str();
    fixtures_cmd->add_option("--patents", fixtures_patents, "Number of patents")
        ->capture_default_str();

    // extract
    auto* extract_cmd = app.add_subcommand("extract", "Pull descriptions out of patent HTML");
    std::string extract_manifest;
    std::string extract_html_dir;
    std::string extract_out;
    std::string extract_diagnostics;
    extract_cmd->add_option("--manifest", extract_manifest, "Figures manifest (descriptions empty)")
        ->required();
    extract_cmd->add_option("--html-dir", extract_html_dir,
                            "Directory of <patent_id>.html files (default: <manifest dir>/patents)");
    extract_cmd->add_option("--out", extract_out, "Output manifest path")->required();
    extract_cmd->add_option("--diagnostics", extract_diagnostics,
                            "Per-patent diagnostics directory (default: <out dir>/diagnostics)");

    // preprocess
    auto* preprocess_cmd = app.add_subcommand("preprocess", "Orientation, dedupe, and filters");
    std::string preprocess_manifest;
    int preprocess_min_year = 2005;
    std::string preprocess_report;
    std::string preprocess_out;
    std::string preprocess_orientation;
    preprocess_cmd->add_option("--manifest", preprocess_manifest, "Input manifest")->required();
    preprocess_cmd->add_option("--min-year", preprocess_min_year, "Earliest kept publication year")
        ->capture_default_str();
    preprocess_cmd->add_option("--report", preprocess_report, "Drop report path")->required();
    preprocess_cmd->add_option("--out", preprocess_out, "Output manifest path")->required();
    preprocess_cmd->add_option("--orientation", preprocess_orientation,
                               "Orientation report path (default: <out dir>/orientation.jsonl)");

    // mask-plan
    auto* mask_cmd = app.add_subcommand("mask-plan", "Deterministic token and patch masks");
    std::string mask_manifest;
    double token_ratio = 0.30;
    double patch_ratio = 0.40;
    std::uint64_t mask_seed = 0;
    std::string mask_pool = "element_bearing";
    std::string mask_out;
    GridFlags mask_grid;
    mask_cmd->add_option("--manifest", mask_manifest, "Input manifest")->required();
    mask_cmd->add_option("--token-ratio", token_ratio, "Fraction of text tokens to mask")
        ->capture_default_str();
    mask_cmd->add_option("--patch-ratio", patch_ratio, "Fraction of patches to mask")
        ->capture_default_str();
    mask_cmd->add_option("--seed", mask_seed, "Global mask seed")->capture_default_str();
    mask_cmd->add_option("--pool", mask_pool, "Patch candidate pool: element_bearing or all")
        ->capture_default_str();
    mask_cmd->add_option("--out", mask_out, "Output mask-plan path")->required();
    mask_grid.attach(mask_cmd);

    // labels
    auto* labels_cmd = app.add_subcommand("labels", "Per-patch element-category labels");
    std::string labels_manifest;
    std::string labels_out;
    GridFlags labels_grid;
    labels_cmd->add_option("--manifest", labels_manifest, "Input manifest")->required();
    labels_cmd->add_option("--out", labels_out, "Output labels path")->required();
    labels_grid.attach(labels_cmd);

    // losses
    auto* losses_cmd = app.add_subcommand("losses", "Reference loss kernels");
    std::string losses_preds;
    std::string losses_kind;
    std::string losses_reduction = "sum";
    bool losses_grad = false;
    losses_cmd->add_option("--preds", losses_preds, "JSON tensor container {shape, values, targets}")
        ->required();
    losses_cmd->add_option("--kind", losses_kind, "mlm, lamim, or pc")->required();
    losses_cmd->add_option("--reduction", losses_reduction, "sum or position-mean")
        ->capture_default_str();
    losses_cmd->add_flag("--grad", losses_grad, "Also print gradient checksums");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against references");
    std::string eval_manifest;
    std::string eval_preds;
    std::string eval_field = "brief";
    std::string eval_report_path;
    std::string eval_split;
    bool eval_smooth = false;
    bool eval_sentence_bleu = false;
    bool eval_no_stem = false;
    std::size_t eval_detailed_cap = 500;
    eval_cmd->add_option("--manifest", eval_manifest, "Reference manifest")->required();
    eval_cmd->add_option("--preds", eval_preds, "Predictions file (JSON lines)")->required();
    eval_cmd->add_option("--field", eval_field, "brief or detailed")->capture_default_str();
    eval_cmd->add_option("--report", eval_report_path, "Report output path")->required();
    eval_cmd->add_option("--split", eval_split, "Score only this split (train/validation/test)");
    eval_cmd->add_flag("--smooth", eval_smooth, "Add-one smoothing for BLEU orders above 1");
    eval_cmd->add_flag("--sentence-bleu", eval_sentence_bleu,
                       "Average per-pair BLEU instead of corpus aggregation");
    eval_cmd->add_flag("--no-stem", eval_no_stem, "Exact-only METEOR matching");
    eval_cmd->add_option("--detailed-cap", eval_detailed_cap,
                         "Detailed reference token cap, 0 disables")
        ->capture_default_str();

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Per-split corpus statistics");
    std::string stats_manifest;
    std::string stats_out;
    stats_cmd->add_option("--manifest", stats_manifest, "Input manifest")->required();
    stats_cmd->add_option("--out", stats_out, "Also write the table to this path");

    // judge
    auto* judge_cmd = app.add_subcommand("judge", "LLM grading over the prompt variants");
    std::string judge_manifest;
    std::string judge_preds;
    std::string judge_field = "brief";
    std::string judge_endpoint;
    std::string judge_model = "gpt-4-vision-preview";
    std::string judge_out;
    std::string judge_prompt_dir = default_prompt_dir();
    std::string judge_images;
    std::size_t judge_sample_limit = 0;
    std::uint64_t judge_sample_seed = 0;
    int judge_retries = 2;
    double judge_temperature = 0.0;
    judge_cmd->add_option("--manifest", judge_manifest, "Reference manifest")->required();
    judge_cmd->add_option("--preds", judge_preds, "Predictions file")->required();
    judge_cmd->add_option("--field", judge_field, "brief or detailed")->capture_default_str();
    judge_cmd->add_option("--endpoint", judge_endpoint, "Chat-completion endpoint URL")
        ->required();
    judge_cmd->add_option("--model", judge_model, "Model name")->capture_default_str();
    judge_cmd->add_option("--out", judge_out, "Per-sample scores output path")->required();
    judge_cmd->add_option("--prompt-dir", judge_prompt_dir, "Prompt variant directory")
        ->capture_default_str();
    judge_cmd->add_option("--images", judge_images,
                          "Optional {figure_id, url} lines for image references");
    judge_cmd->add_option("--sample", judge_sample_limit,
                          "Judge a random subset of this size (0 = all)")
        ->capture_default_str();
    judge_cmd->add_option("--sample-seed", judge_sample_seed, "Subset sampling seed")
        ->capture_default_str();
    judge_cmd->add_option("--retries", judge_retries, "Extra attempts per prompt variant")
        ->capture_default_str();
    judge_cmd->add_option("--temperature", judge_temperature, "Sampling temperature")
        ->capture_default_str();

    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Run the configured stages in order");
    std::string pipeline_config_path;
    std::vector<std::string> pipeline_stage_names;
    bool pipeline_force = false;
    std::string pipeline_corpus;
    std::string pipeline_out;
    std::string pipeline_preds;
    std::optional<std::uint64_t> pipeline_seed;
    std::optional<std::size_t> pipeline_workers;
    pipeline_cmd->add_option("--config", pipeline_config_path, "Pipeline config JSON")->required();
    pipeline_cmd->add_option("--stages", pipeline_stage_names,
                             "Stage subset (default: all but judge)")
        ->delimiter(',');
    pipeline_cmd->add_flag("--force", pipeline_force, "Rerun stages even when up to date");
    pipeline_cmd->add_option("--corpus", pipeline_corpus, "Override paths.corpus_dir");
    pipeline_cmd->add_option("--out", pipeline_out, "Override paths.out_dir");
    pipeline_cmd->add_option("--preds", pipeline_preds, "Override paths.predictions");
    pipeline_cmd->add_option("--seed", pipeline_seed, "Override the global seed");
    pipeline_cmd->add_option("--pipeline-workers", pipeline_workers, "Override worker count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fixtures_cmd) {
            const patfig::FixtureSummary summary =
                patfig::generate_fixture_corpus(fixtures_seed, fixtures_patents, fixtures_out);
            json out;
            out["patents"] = summary.patents;
            out["figures"] = summary.figures;
            out["expected_kept"] = summary.expected_kept;
            out["expected_dropped"] = summary.expected_dropped;
            out["duplicate_pairs"] = summary.duplicate_pairs;
            out["plot_figures"] = summary.plot_figures;
            out["multi_figure_sheets"] = summary.multi_figure_sheets;
            out["rotated_figures"] = summary.rotated_figures;
            out["pre_cutoff_patents"] = summary.pre_cutoff_patents;
            std::cout << out.dump(2) << '\n';
            return 0;
        }

        if (*extract_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            if (extract_html_dir.empty()) {
                extract_html_dir =
                    (fs::path(extract_manifest).parent_path() / "patents").string();
            }
            if (extract_diagnostics.empty()) {
                extract_diagnostics =
                    (fs::path(extract_out).parent_path() / "diagnostics").string();
            }
            const patfig::ExtractStageReport report =
                patfig::extract_stage(extract_manifest, extract_html_dir, extract_out,
                                      extract_diagnostics, tokenizer, workers);
            std::cout << json({{"patents", report.patents},
                               {"figures", report.figures},
                               {"extracted", report.extracted},
                               {"incomplete", report.incomplete}})
                             .dump(2)
                      << '\n';
            return 0;
        }

        if (*preprocess_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            if (preprocess_orientation.empty()) {
                preprocess_orientation =
                    (fs::path(preprocess_out).parent_path() / "orientation.jsonl").string();
            }
            const patfig::PreprocessStageReport report = patfig::preprocess_stage(
                preprocess_manifest, preprocess_min_year, preprocess_out, preprocess_report,
                preprocess_orientation, tokenizer, workers);
            std::cout << json({{"input", report.input},
                               {"kept", report.kept},
                               {"dedupe_removed", report.dedupe_removed},
                               {"filtered", report.filtered},
                               {"rotated", report.rotated}})
                             .dump(2)
                      << '\n';
            return 0;
        }

        if (*mask_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            const patfig::MaskPlanStageReport report = patfig::mask_plan_stage(
                mask_manifest, mask_grid.build(), token_ratio, patch_ratio, mask_seed,
                parse_pool(mask_pool), mask_out, tokenizer, workers);
            std::cout << json({{"figures", report.figures},
                               {"masked_tokens", report.masked_tokens},
                               {"masked_patches", report.masked_patches}})
                             .dump(2)
                      << '\n';
            return 0;
        }

        if (*labels_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            const patfig::LabelsStageReport report = patfig::labels_stage(
                labels_manifest, labels_grid.build(), labels_out, tokenizer, workers);
            std::cout << json({{"figures", report.figures},
                               {"labeled_patches", report.labeled_patches}})
                             .dump(2)
                      << '\n';
            return 0;
        }

        if (*losses_cmd) {
            return run_losses(losses_preds, losses_kind, losses_reduction, losses_grad);
        }

        if (*eval_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            patfig::EvalStageConfig config;
            config.field = parse_field(eval_field);
            config.smoothing = eval_smooth;
            config.sentence_level_bleu = eval_sentence_bleu;
            config.meteor_stem = !eval_no_stem;
            config.detailed_reference_cap = eval_detailed_cap;
            if (!eval_split.empty()) {
                config.split = patfig::split_from_string(eval_split);
            }
            const patfig::EvalStageReport report =
                patfig::eval_stage(eval_manifest, eval_preds, config, tokenizer, eval_report_path);
            for (const std::string& warning : report.warnings) {
                std::cerr << "warning: " << warning << '\n';
            }
            std::cout << patfig::read_text_file(eval_report_path);
            return 0;
        }

        if (*stats_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            const std::string out_path =
                stats_out.empty()
                    ? (fs::temp_directory_path() / "patfig_stats.json").string()
                    : stats_out;
            patfig::stats_stage(stats_manifest, tokenizer, out_path);
            std::cout << patfig::read_text_file(out_path);
            if (stats_out.empty()) {
                fs::remove(out_path);
            }
            return 0;
        }

        if (*judge_cmd) {
            const patfig::BpeTokenizer tokenizer = load_tokenizer(vocab);
            patfig::JudgeStageConfig config;
            config.endpoint = judge_endpoint;
            config.model = judge_model;
            config.prompt_dir = judge_prompt_dir;
            config.max_retries = judge_retries;
            config.temperature = judge_temperature;
            config.sample_limit = judge_sample_limit;
            config.sample_seed = judge_sample_seed;

            patfig::HttpTransportConfig http;
            http.endpoint = judge_endpoint;
            http.model = judge_model;
            const auto transport = patfig::make_http_transport(http);

            const patfig::DescriptionKind kind = parse_field(judge_field) ==
                                                         patfig::EvalField::Detailed
                                                     ? patfig::DescriptionKind::Detailed
                                                     : patfig::DescriptionKind::Brief;
            const patfig::JudgeStageReport report =
                patfig::judge_stage(judge_manifest, judge_preds, judge_images, kind, *transport,
                                    config, judge_out, tokenizer, workers);
            std::cout << json({{"samples", report.samples}, {"degraded", report.degraded}})
                             .dump(2)
                      << '\n';
            return 0;
        }

        if (*pipeline_cmd) {
            patfig::PipelineConfig config = patfig::PipelineConfig::from_file(pipeline_config_path);
            if (config.vocab_path.empty()) {
                config.vocab_path = vocab;
            }
            if (!pipeline_corpus.empty()) config.paths.corpus_dir = pipeline_corpus;
            if (!pipeline_out.empty()) config.paths.out_dir = pipeline_out;
            if (!pipeline_preds.empty()) config.paths.predictions = pipeline_preds;
            if (pipeline_seed) config.seed = *pipeline_seed;
            if (pipeline_workers) config.workers = *pipeline_workers;
            if (config.judge.prompt_dir.empty()) {
                config.judge.prompt_dir = default_prompt_dir();
            }

            patfig::RunOptions run;
            run.log = emit_log_line;
            run.force = pipeline_force;
            for (const std::string& name : pipeline_stage_names) {
                run.stages.push_back(patfig::stage_from_string(name));
            }
            const patfig::PipelineResult result = patfig::run_pipeline(config, run);
            json outcomes = json::array();
            for (const patfig::StageOutcome& outcome : result.outcomes) {
                json row;
                row["stage"] = patfig::to_string(outcome.stage);
                row["ran"] = outcome.ran;
                if (!outcome.ran) {
                    row["skip_reason"] = outcome.skip_reason;
                } else {
                    row["items"] = outcome.items;
                    row["elapsed_ms"] = outcome.elapsed_ms;
                }
                outcomes.push_back(std::move(row));
            }
            std::cout << json({{"outcomes", outcomes}}).dump(2) << '\n';
            return 0;
        }
    } catch (const patfig::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }

    return 0;
}
