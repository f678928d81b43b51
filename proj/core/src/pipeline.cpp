#include "patfig/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "patfig/html_extract.hpp"
#include "patfig/preprocess.hpp"
#include "patfig/tokenizer.hpp"
#include "patfig/util.hpp"

namespace patfig {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

json parse_json(const std::string& text, const std::string& origin) {
    json parsed = json::parse(text, nullptr, false);
    if (parsed.is_discarded()) {
        throw Error("invalid JSON in " + origin);
    }
    return parsed;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& origin) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (allowed.find(key) == allowed.end()) {
            throw Error(origin + ": unknown key \"" + key + "\"");
        }
    }
}

std::string two_decimals(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

std::string lowercase(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

/// Stored path -> path usable from out_parent: resolve against the source
/// manifest's directory, then re-relativize. Falls back to the absolute
/// path when the two trees share no common root.
std::string relocate_path(const CorpusManifest& source, const std::string& stored,
                          const fs::path& out_parent) {
    const fs::path resolved =
        fs::absolute(fs::path(source.resolve_path(stored))).lexically_normal();
    const fs::path rel = resolved.lexically_relative(out_parent);
    if (rel.empty()) {
        return resolved.generic_string();
    }
    return rel.generic_string();
}

fs::path normalized_parent(const std::string& file_path) {
    return fs::absolute(fs::path(file_path)).lexically_normal().parent_path();
}

std::string join_text(const std::vector<OcrToken>& ocr) {
    std::string joined;
    for (const OcrToken& tok : ocr) {
        if (!joined.empty()) joined += ' ';
        joined += tok.text;
    }
    return joined;
}

std::map<std::string, std::string> load_image_refs(const std::string& path) {
    std::map<std::string, std::string> refs;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) continue;
        std::ostringstream where;
        where << path << " line " << line_no;
        json obj = parse_json(line, where.str());
        const std::string id = obj.at("figure_id").get<std::string>();
        if (!refs.emplace(id, obj.at("url").get<std::string>()).second) {
            throw Error("duplicate figure_id \"" + id + "\" in " + path);
        }
    }
    return refs;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text,
                                              const std::string& origin) {
    json root = parse_json(text, origin);
    if (!root.is_object()) {
        throw Error(origin + ": config must be a JSON object");
    }
    reject_unknown_keys(root,
                        {"vocab_path", "grid", "token_mask_ratio", "patch_mask_ratio",
                         "patch_pool", "seed", "min_publication_year", "workers", "eval",
                         "judge", "paths"},
                        origin);

    PipelineConfig config;
    if (root.contains("vocab_path")) config.vocab_path = root["vocab_path"].get<std::string>();

    if (root.contains("grid")) {
        const json& grid = root["grid"];
        reject_unknown_keys(grid, {"height", "width", "patch_size"}, origin + ": grid");
        if (grid.contains("height")) config.grid.height = grid["height"].get<int>();
        if (grid.contains("width")) config.grid.width = grid["width"].get<int>();
        if (grid.contains("patch_size")) config.grid.patch_size = grid["patch_size"].get<int>();
    }

    if (root.contains("token_mask_ratio"))
        config.token_mask_ratio = root["token_mask_ratio"].get<double>();
    if (root.contains("patch_mask_ratio"))
        config.patch_mask_ratio = root["patch_mask_ratio"].get<double>();

    if (root.contains("patch_pool")) {
        const std::string pool = root["patch_pool"].get<std::string>();
        if (pool == "element_bearing") {
            config.patch_pool = PatchPool::ElementBearing;
        } else if (pool == "all") {
            config.patch_pool = PatchPool::All;
        } else {
            throw Error(origin + ": patch_pool must be \"element_bearing\" or \"all\", got \"" +
                        pool + "\"");
        }
    }

    if (root.contains("seed")) config.seed = root["seed"].get<std::uint64_t>();
    if (root.contains("min_publication_year"))
        config.min_publication_year = root["min_publication_year"].get<int>();
    if (root.contains("workers")) config.workers = root["workers"].get<std::size_t>();

    if (root.contains("eval")) {
        const json& ev = root["eval"];
        reject_unknown_keys(ev,
                            {"field", "smoothing", "sentence_level_bleu", "meteor_stem",
                             "detailed_reference_cap", "split"},
                            origin + ": eval");
        if (ev.contains("field")) {
            const std::string field = ev["field"].get<std::string>();
            if (field == "brief") {
                config.eval.field = EvalField::Brief;
            } else if (field == "detailed") {
                config.eval.field = EvalField::Detailed;
            } else {
                throw Error(origin + ": eval.field must be \"brief\" or \"detailed\", got \"" +
                            field + "\"");
            }
        }
        if (ev.contains("smoothing")) config.eval.smoothing = ev["smoothing"].get<bool>();
        if (ev.contains("sentence_level_bleu"))
            config.eval.sentence_level_bleu = ev["sentence_level_bleu"].get<bool>();
        if (ev.contains("meteor_stem")) config.eval.meteor_stem = ev["meteor_stem"].get<bool>();
        if (ev.contains("detailed_reference_cap"))
            config.eval.detailed_reference_cap = ev["detailed_reference_cap"].get<std::size_t>();
        if (ev.contains("split") && !ev["split"].is_null())
            config.eval.split = split_from_string(ev["split"].get<std::string>());
    }

    if (root.contains("judge")) {
        const json& jd = root["judge"];
        reject_unknown_keys(jd,
                            {"endpoint", "model", "prompt_dir", "max_retries", "temperature",
                             "sample_limit", "sample_seed"},
                            origin + ": judge");
        if (jd.contains("endpoint")) config.judge.endpoint = jd["endpoint"].get<std::string>();
        if (jd.contains("model")) config.judge.model = jd["model"].get<std::string>();
        if (jd.contains("prompt_dir"))
            config.judge.prompt_dir = jd["prompt_dir"].get<std::string>();
        if (jd.contains("max_retries")) config.judge.max_retries = jd["max_retries"].get<int>();
        if (jd.contains("temperature"))
            config.judge.temperature = jd["temperature"].get<double>();
        if (jd.contains("sample_limit"))
            config.judge.sample_limit = jd["sample_limit"].get<std::size_t>();
        if (jd.contains("sample_seed"))
            config.judge.sample_seed = jd["sample_seed"].get<std::uint64_t>();
    }

    if (root.contains("paths")) {
        const json& paths = root["paths"];
        reject_unknown_keys(paths, {"corpus_dir", "out_dir", "predictions"}, origin + ": paths");
        if (paths.contains("corpus_dir"))
            config.paths.corpus_dir = paths["corpus_dir"].get<std::string>();
        if (paths.contains("out_dir")) config.paths.out_dir = paths["out_dir"].get<std::string>();
        if (paths.contains("predictions"))
            config.paths.predictions = paths["predictions"].get<std::string>();
    }

    return config;
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
    return from_json_text(read_text_file(path), path);
}

void PipelineConfig::validate() const {
    if (vocab_path.empty()) {
        throw Error("config: vocab_path is required");
    }
    if (!fs::exists(vocab_path)) {
        throw Error("config: vocabulary file not found: " + vocab_path);
    }
    if (grid.height <= 0 || grid.width <= 0 || grid.patch_size <= 0) {
        throw Error("config: grid dimensions must be positive");
    }
    if (grid.height % grid.patch_size != 0 || grid.width % grid.patch_size != 0) {
        throw Error("config: patch_size must divide both height and width");
    }
    if (token_mask_ratio < 0.0 || token_mask_ratio > 1.0 || patch_mask_ratio < 0.0 ||
        patch_mask_ratio > 1.0) {
        throw Error("config: mask ratios must lie in [0, 1]");
    }
    if (min_publication_year < 0) {
        throw Error("config: min_publication_year cannot be negative");
    }
    if (workers == 0) {
        throw Error("config: workers must be at least 1");
    }
    if (paths.corpus_dir.empty() || paths.out_dir.empty()) {
        throw Error("config: paths.corpus_dir and paths.out_dir are required");
    }
}

const char* to_string(Stage s) {
    switch (s) {
        case Stage::Extract: return "extract";
        case Stage::Preprocess: return "preprocess";
        case Stage::MaskPlan: return "mask-plan";
        case Stage::Labels: return "labels";
        case Stage::Stats: return "stats";
        case Stage::Eval: return "eval";
        case Stage::Judge: return "judge";
    }
    throw Error("unknown stage");
}

Stage stage_from_string(const std::string& name) {
    if (name == "extract") return Stage::Extract;
    if (name == "preprocess") return Stage::Preprocess;
    if (name == "mask-plan") return Stage::MaskPlan;
    if (name == "labels") return Stage::Labels;
    if (name == "stats") return Stage::Stats;
    if (name == "eval") return Stage::Eval;
    if (name == "judge") return Stage::Judge;
    throw Error("unknown stage \"" + name + "\"");
}

std::vector<Stage> default_stages() {
    return {Stage::Extract, Stage::Preprocess, Stage::MaskPlan,
            Stage::Labels,  Stage::Stats,      Stage::Eval};
}

ExtractStageReport extract_stage(const std::string& figures_manifest,
                                 const std::string& html_dir, const std::string& out_manifest,
                                 const std::string& diagnostics_dir,
                                 const BpeTokenizer& tokenizer, std::size_t workers) {
    const CorpusManifest manifest = load_manifest(figures_manifest, tokenizer);

    std::vector<std::string> patent_order;
    std::map<std::string, std::vector<std::size_t>> records_by_patent;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        const std::string& pid = manifest.records[i].patent_id;
        auto [it, inserted] = records_by_patent.try_emplace(pid);
        if (inserted) {
            patent_order.push_back(pid);
        }
        it->second.push_back(i);
    }

    fs::create_directories(diagnostics_dir);
    std::vector<std::optional<ExtractionResult::Pair>> pairs(manifest.records.size());

    parallel_for(patent_order.size(), workers, [&](std::size_t p) {
        const std::string& pid = patent_order[p];
        const std::vector<std::size_t>& indices = records_by_patent.at(pid);

        const fs::path html_path = fs::path(html_dir) / (pid + ".html");
        if (!fs::exists(html_path)) {
            throw Error("patent document not found: " + html_path.string());
        }

        std::vector<std::string> labels;
        for (std::size_t idx : indices) {
            const auto& label = manifest.records[idx].figure_label;
            if (!label) continue;
            const std::string norm = normalize_figure_label(*label);
            if (std::find(labels.begin(), labels.end(), norm) == labels.end()) {
                labels.push_back(norm);
            }
        }

        const PatentHtmlDoc doc = parse_patent_html(read_text_file(html_path.string()));
        json diag;
        diag["patent_id"] = pid;
        diag["flags"] = doc.flags;

        if (labels.empty()) {
            diag["unmatched"] = json::array();
            diag["paragraphs"] = {{"total", 0},           {"attributed", 0},
                                  {"dropped_before_first", 0}, {"discarded_multifig", 0},
                                  {"trailing", 0}};
            diag["sentences_discarded_multifig"] = 0;
            diag["flags"].push_back("no-figure-labels");
        } else {
            const ExtractionResult result = extract_descriptions(doc, labels);
            for (std::size_t idx : indices) {
                const auto& label = manifest.records[idx].figure_label;
                if (!label) continue;
                auto found = result.by_label.find(normalize_figure_label(*label));
                if (found != result.by_label.end()) {
                    pairs[idx] = found->second;
                }
            }
            json unmatched = json::array();
            for (const UnmatchedLabel& u : result.unmatched) {
                unmatched.push_back({{"label", u.label}, {"reason", u.reason}});
            }
            diag["unmatched"] = std::move(unmatched);
            const DetailedExtraction& dd = result.detailed_diagnostics;
            diag["paragraphs"] = {{"total", dd.total_paragraphs},
                                  {"attributed", dd.paragraphs_attributed},
                                  {"dropped_before_first", dd.paragraphs_dropped_before_first},
                                  {"discarded_multifig", dd.paragraphs_discarded_multifig},
                                  {"trailing", dd.trailing_paragraphs}};
            diag["sentences_discarded_multifig"] = dd.sentences_discarded_multifig;
        }

        write_text_file_atomic((fs::path(diagnostics_dir) / (pid + ".json")).string(),
                               diag.dump(2) + "\n");
    });

    const fs::path out_parent = normalized_parent(out_manifest);
    CorpusManifest output;
    output.base_dir = out_parent.string();
    ExtractStageReport report;
    report.patents = patent_order.size();
    report.figures = manifest.records.size();
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        if (!pairs[i]) {
            ++report.incomplete;
            continue;
        }
        ManifestRecord rec = manifest.records[i];
        rec.descriptions.brief = pairs[i]->brief;
        rec.descriptions.detailed = pairs[i]->detailed;
        rec.ocr_path = relocate_path(manifest, rec.ocr_path, out_parent);
        rec.elements_path = relocate_path(manifest, rec.elements_path, out_parent);
        if (rec.ocr_rotated_path) {
            rec.ocr_rotated_path = relocate_path(manifest, *rec.ocr_rotated_path, out_parent);
        }
        output.records.push_back(std::move(rec));
        ++report.extracted;
    }

    save_manifest(output, out_manifest);
    return report;
}

PreprocessStageReport preprocess_stage(const std::string& manifest_path, int min_year,
                                       const std::string& out_manifest,
                                       const std::string& drops_path,
                                       const std::string& orientation_path,
                                       const BpeTokenizer& tokenizer, std::size_t workers) {
    const CorpusManifest manifest = load_manifest(manifest_path, tokenizer);
    const std::size_t n = manifest.records.size();

    struct FigureState {
        PatentFigure figure;
        bool rotated_won = false;
        std::optional<OrientationDecision> orientation;
    };
    std::vector<FigureState> states(n);

    parallel_for(n, workers, [&](std::size_t i) {
        const ManifestRecord& rec = manifest.records[i];
        FigureState& state = states[i];

        std::vector<OcrToken> ocr = load_ocr_file(manifest.resolve_path(rec.ocr_path));
        if (rec.ocr_rotated_path) {
            const std::vector<OcrToken> rotated =
                load_ocr_file(manifest.resolve_path(*rec.ocr_rotated_path));
            const OrientationDecision decision = decide_orientation(ocr, rotated);
            state.orientation = decision;
            if (decision.choice == Orientation::Rotated90) {
                ocr = rotated;
                state.rotated_won = true;
            }
        }

        PatentFigure& fig = state.figure;
        fig.patent_id = rec.patent_id;
        fig.figure_id = rec.figure_id;
        fig.figure_label = rec.figure_label;
        fig.image_width = rec.image_width;
        fig.image_height = rec.image_height;
        fig.ocr_tokens = std::move(ocr);
        fig.is_plot = rec.is_plot;
        fig.publication_year = rec.publication_year;
    });

    // Representative dedupe runs within each patent's document-ordered run
    // of figures; keys never match across patents.
    std::vector<std::string> patent_order;
    std::map<std::string, std::vector<std::size_t>> by_patent;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = by_patent.try_emplace(manifest.records[i].patent_id);
        if (inserted) {
            patent_order.push_back(manifest.records[i].patent_id);
        }
        it->second.push_back(i);
    }

    std::set<std::string> dedupe_removed_ids;
    for (const std::string& pid : patent_order) {
        std::vector<PatentFigure> group;
        for (std::size_t idx : by_patent.at(pid)) {
            group.push_back(states[idx].figure);
        }
        const std::vector<PatentFigure> kept = dedupe_representative(group);
        std::set<std::string> kept_ids;
        for (const PatentFigure& fig : kept) {
            kept_ids.insert(fig.figure_id);
        }
        for (const PatentFigure& fig : group) {
            if (kept_ids.find(fig.figure_id) == kept_ids.end()) {
                dedupe_removed_ids.insert(fig.figure_id);
            }
        }
    }

    std::vector<PatentFigure> survivors;
    for (std::size_t i = 0; i < n; ++i) {
        if (dedupe_removed_ids.find(manifest.records[i].figure_id) ==
            dedupe_removed_ids.end()) {
            survivors.push_back(states[i].figure);
        }
    }
    const FilterResult filtered = filter_corpus(survivors, min_year);

    std::set<std::string> kept_ids;
    for (const PatentFigure& fig : filtered.kept) {
        kept_ids.insert(fig.figure_id);
    }
    std::map<std::string, std::string> drop_reason;
    for (const DroppedFigure& drop : filtered.dropped) {
        drop_reason.emplace(drop.figure_id, drop.reason);
    }

    const fs::path out_parent = normalized_parent(out_manifest);
    CorpusManifest output;
    output.base_dir = out_parent.string();
    PreprocessStageReport report;
    report.input = n;

    std::ostringstream drops;
    std::ostringstream orientation;
    for (std::size_t i = 0; i < n; ++i) {
        const ManifestRecord& rec = manifest.records[i];
        if (dedupe_removed_ids.count(rec.figure_id)) {
            drops << json({{"figure_id", rec.figure_id}, {"reason", "duplicate_representative"}})
                         .dump()
                  << '\n';
            ++report.dedupe_removed;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const ManifestRecord& rec = manifest.records[i];
        auto reason = drop_reason.find(rec.figure_id);
        if (reason != drop_reason.end()) {
            drops << json({{"figure_id", rec.figure_id}, {"reason", reason->second}}).dump()
                  << '\n';
            ++report.filtered;
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const ManifestRecord& rec = manifest.records[i];
        const FigureState& state = states[i];
        if (state.orientation) {
            orientation << json({{"figure_id", rec.figure_id},
                                 {"choice", state.rotated_won ? "rotated90" : "original"},
                                 {"avg_len_original", state.orientation->avg_len_original},
                                 {"avg_len_rotated", state.orientation->avg_len_rotated}})
                               .dump()
                        << '\n';
        }

        if (kept_ids.find(rec.figure_id) == kept_ids.end()) {
            continue;
        }
        ManifestRecord out = rec;
        if (state.rotated_won) {
            out.ocr_path = *out.ocr_rotated_path;
            ++report.rotated;
        }
        out.ocr_rotated_path.reset();
        out.ocr_path = relocate_path(manifest, out.ocr_path, out_parent);
        out.elements_path = relocate_path(manifest, out.elements_path, out_parent);
        output.records.push_back(std::move(out));
        ++report.kept;
    }

    save_manifest(output, out_manifest);
    write_text_file_atomic(drops_path, drops.str());
    write_text_file_atomic(orientation_path, orientation.str());
    return report;
}

MaskPlanStageReport mask_plan_stage(const std::string& manifest_path, const PatchGrid& grid,
                                    double token_ratio, double patch_ratio, std::uint64_t seed,
                                    PatchPool pool, const std::string& out_path,
                                    const BpeTokenizer& tokenizer, std::size_t workers) {
    const CorpusManifest manifest = load_manifest(manifest_path, tokenizer);
    const std::size_t n = manifest.records.size();

    std::vector<std::string> lines(n);
    std::vector<std::size_t> token_totals(n, 0);
    std::vector<std::size_t> patch_totals(n, 0);

    parallel_for(n, workers, [&](std::size_t i) {
        const ManifestRecord& rec = manifest.records[i];
        PatentFigure fig;
        fig.patent_id = rec.patent_id;
        fig.figure_id = rec.figure_id;
        fig.ocr_tokens = load_ocr_file(manifest.resolve_path(rec.ocr_path));
        fig.element_boxes = load_elements_file(manifest.resolve_path(rec.elements_path));

        const std::size_t token_count = tokenizer.count_tokens(join_text(fig.ocr_tokens));
        const MaskPlan plan =
            plan_figure_mask(fig, grid, token_count, token_ratio, patch_ratio, seed, pool);
        const std::size_t eligible = eligible_patches(grid, fig.element_boxes).size();

        lines[i] = json({{"figure_id", rec.figure_id},
                         {"seed", plan.seed},
                         {"t_m", plan.masked_token_positions},
                         {"r_m", plan.masked_patch_indices},
                         {"eligible_count", eligible},
                         {"token_count", token_count}})
                       .dump();
        token_totals[i] = plan.masked_token_positions.size();
        patch_totals[i] = plan.masked_patch_indices.size();
    });

    std::ostringstream out;
    MaskPlanStageReport report;
    report.figures = n;
    for (std::size_t i = 0; i < n; ++i) {
        out << lines[i] << '\n';
        report.masked_tokens += token_totals[i];
        report.masked_patches += patch_totals[i];
    }
    write_text_file_atomic(out_path, out.str());
    return report;
}

LabelsStageReport labels_stage(const std::string& manifest_path, const PatchGrid& grid,
                               const std::string& out_path, const BpeTokenizer& tokenizer,
                               std::size_t workers) {
    const CorpusManifest manifest = load_manifest(manifest_path, tokenizer);
    const std::size_t n = manifest.records.size();

    json classes = json::array();
    for (ElementCategory c : kAllElementCategories) {
        classes.push_back(to_string(c));
    }

    std::vector<std::string> lines(n);
    std::vector<std::size_t> labeled(n, 0);

    parallel_for(n, workers, [&](std::size_t i) {
        const ManifestRecord& rec = manifest.records[i];
        const std::vector<ElementBox> elements =
            load_elements_file(manifest.resolve_path(rec.elements_path));
        const PatchLabelGrid label_grid = build_patch_labels(grid, elements);

        json rows = json::array();
        for (std::size_t patch = 0; patch < label_grid.patch_count; ++patch) {
            json row = json::array();
            for (std::uint8_t bit : label_grid.labels[patch]) {
                row.push_back(static_cast<int>(bit));
            }
            rows.push_back(std::move(row));
            if (label_grid.any(patch)) {
                ++labeled[i];
            }
        }
        lines[i] = json({{"figure_id", rec.figure_id},
                         {"patch_count", label_grid.patch_count},
                         {"classes", classes},
                         {"labels", std::move(rows)}})
                       .dump();
    });

    std::ostringstream out;
    LabelsStageReport report;
    report.figures = n;
    for (std::size_t i = 0; i < n; ++i) {
        out << lines[i] << '\n';
        report.labeled_patches += labeled[i];
    }
    write_text_file_atomic(out_path, out.str());
    return report;
}

StatsStageReport stats_stage(const std::string& manifest_path, const BpeTokenizer& tokenizer,
                             const std::string& out_path) {
    const CorpusManifest manifest = load_manifest(manifest_path, tokenizer);

    const std::vector<std::string> offenders = check_split_exclusivity(manifest);
    if (!offenders.empty()) {
        std::ostringstream msg;
        msg << "patents appear in more than one split:";
        for (const std::string& pid : offenders) {
            msg << ' ' << pid;
        }
        throw Error(msg.str());
    }

    const CorpusStats stats = compute_stats(manifest);
    auto split_row = [](const SplitStats& row) {
        json obj;
        obj["images"] = row.image_count;
        obj["patents"] = row.unique_patents;
        if (row.averages_defined) {
            obj["avg_brief_tokens"] = two_decimals(row.avg_brief_tokens);
            obj["avg_detailed_tokens"] = two_decimals(row.avg_detailed_tokens);
            obj["avg_images_per_patent"] = two_decimals(row.avg_images_per_patent);
        } else {
            obj["avg_brief_tokens"] = nullptr;
            obj["avg_detailed_tokens"] = nullptr;
            obj["avg_images_per_patent"] = nullptr;
        }
        return obj;
    };

    json out;
    out["splits"] = {{"train", split_row(stats.train)},
                     {"validation", split_row(stats.validation)},
                     {"test", split_row(stats.test)}};
    out["total_images"] = manifest.records.size();
    write_text_file_atomic(out_path, out.dump(2) + "\n");

    StatsStageReport report;
    report.figures = manifest.records.size();
    return report;
}

EvalStageReport eval_stage(const std::string& manifest_path, const std::string& preds_path,
                           const EvalStageConfig& config, const BpeTokenizer& tokenizer,
                           const std::string& out_path) {
    CorpusManifest manifest = load_manifest(manifest_path, tokenizer);
    const std::map<std::string, std::string> predictions = load_predictions(preds_path);

    if (config.field == EvalField::Detailed && config.detailed_reference_cap > 0) {
        for (ManifestRecord& rec : manifest.records) {
            rec.descriptions.detailed =
                clip_detailed(tokenizer, rec.descriptions.detailed, config.detailed_reference_cap);
        }
    }

    EvalStageReport report;
    EvalOptions options;
    options.field = config.field;
    options.bleu.smooth_higher_orders = config.smoothing;
    options.meteor.stem_matching = config.meteor_stem;
    options.sentence_level_bleu = config.sentence_level_bleu;
    options.split = config.split;
    options.warnings = &report.warnings;

    const MetricReport metrics = evaluate_corpus(predictions, manifest, options);
    write_text_file_atomic(out_path, report_to_json(metrics) + "\n");
    report.scored = metrics.sample_count;
    return report;
}

JudgeStageReport judge_stage(const std::string& manifest_path, const std::string& preds_path,
                             const std::string& images_path, DescriptionKind kind,
                             ChatTransport& transport, const JudgeStageConfig& config,
                             const std::string& out_path, const BpeTokenizer& tokenizer,
                             std::size_t workers) {
    const CorpusManifest manifest = load_manifest(manifest_path, tokenizer);
    const std::map<std::string, std::string> predictions = load_predictions(preds_path);
    const std::map<std::string, std::string> image_refs =
        images_path.empty() ? std::map<std::string, std::string>{} : load_image_refs(images_path);

    std::set<std::string> known_ids;
    for (const ManifestRecord& rec : manifest.records) {
        known_ids.insert(rec.figure_id);
    }
    std::vector<std::string> missing;
    for (const auto& [id, text] : predictions) {
        (void)text;
        if (known_ids.find(id) == known_ids.end()) {
            missing.push_back(id);
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "predictions without a manifest reference:";
        for (const std::string& id : missing) {
            msg << ' ' << id;
        }
        throw Error(msg.str());
    }

    std::vector<std::size_t> sample_indices;
    for (std::size_t i = 0; i < manifest.records.size(); ++i) {
        if (predictions.count(manifest.records[i].figure_id)) {
            sample_indices.push_back(i);
        }
    }
    if (sample_indices.empty()) {
        throw Error("no predictions matched the manifest; nothing to judge");
    }

    if (config.sample_limit > 0 && config.sample_limit < sample_indices.size()) {
        SplitMix64 rng(config.sample_seed);
        std::vector<std::size_t> shuffled = sample_indices;
        for (std::size_t k = 0; k < config.sample_limit; ++k) {
            const std::size_t j = k + rng.next_below(shuffled.size() - k);
            std::swap(shuffled[k], shuffled[j]);
        }
        shuffled.resize(config.sample_limit);
        std::sort(shuffled.begin(), shuffled.end());
        sample_indices = std::move(shuffled);
    }

    const PromptLibrary prompts = PromptLibrary::load(config.prompt_dir);
    JudgeOptions judge_options;
    judge_options.model = config.model;
    judge_options.temperature = config.temperature;
    judge_options.max_retries = config.max_retries;

    const std::size_t n = sample_indices.size();
    std::vector<AveragedJudgeScores> results(n);
    parallel_for(n, workers, [&](std::size_t i) {
        const ManifestRecord& rec = manifest.records[sample_indices[i]];
        auto ref = image_refs.find(rec.figure_id);
        const std::string image_ref =
            ref != image_refs.end() ? ref->second : rec.figure_id;
        const std::string& ground_truth = kind == DescriptionKind::Brief
                                              ? rec.descriptions.brief
                                              : rec.descriptions.detailed;
        results[i] = judge_sample(prompts, image_ref, ground_truth,
                                  predictions.at(rec.figure_id), kind, transport, judge_options);
    });

    std::array<double, kJudgeCriterionCount> totals = {0, 0, 0, 0, 0, 0};
    std::ostringstream out;
    JudgeStageReport report;
    report.samples = n;
    for (std::size_t i = 0; i < n; ++i) {
        const ManifestRecord& rec = manifest.records[sample_indices[i]];
        const AveragedJudgeScores& avg = results[i];
        json scores;
        for (int c = 0; c < kJudgeCriterionCount; ++c) {
            scores[lowercase(kJudgeCriteria[c])] = avg.values[c];
            totals[c] += avg.values[c];
        }
        out << json({{"record", "sample"},
                     {"figure_id", rec.figure_id},
                     {"scores", std::move(scores)},
                     {"variants_used", avg.variants_used},
                     {"failed_variants", avg.failed_variants}})
                   .dump()
            << '\n';
        if (avg.degraded()) {
            ++report.degraded;
        }
    }

    json mean_scores;
    for (int c = 0; c < kJudgeCriterionCount; ++c) {
        mean_scores[lowercase(kJudgeCriteria[c])] = totals[c] / static_cast<double>(n);
    }
    out << json({{"record", "corpus_mean"},
                 {"samples", n},
                 {"scores", std::move(mean_scores)}})
               .dump()
        << '\n';

    write_text_file_atomic(out_path, out.str());
    return report;
}

namespace {

bool outputs_up_to_date(const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs) {
    fs::file_time_type newest_input = fs::file_time_type::min();
    for (const fs::path& input : inputs) {
        if (!fs::exists(input)) {
            return false;
        }
        newest_input = std::max(newest_input, fs::last_write_time(input));
    }
    fs::file_time_type oldest_output = fs::file_time_type::max();
    for (const fs::path& output : outputs) {
        if (!fs::exists(output)) {
            return false;
        }
        oldest_output = std::min(oldest_output, fs::last_write_time(output));
    }
    return oldest_output >= newest_input;
}

std::vector<fs::path> html_inputs(const fs::path& figures_manifest, const fs::path& html_dir) {
    std::vector<fs::path> inputs = {figures_manifest};
    if (fs::exists(html_dir)) {
        for (const auto& entry : fs::directory_iterator(html_dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".html") {
                inputs.push_back(entry.path());
            }
        }
    }
    return inputs;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    config.validate();

    std::vector<Stage> stages = options.stages.empty() ? default_stages() : options.stages;
    std::sort(stages.begin(), stages.end(),
              [](Stage a, Stage b) { return static_cast<int>(a) < static_cast<int>(b); });
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());

    const BpeTokenizer tokenizer = BpeTokenizer::from_file(config.vocab_path);
    const PatchGrid grid =
        build_patch_grid(config.grid.height, config.grid.width, config.grid.patch_size);

    const fs::path corpus(config.paths.corpus_dir);
    const fs::path out(config.paths.out_dir);
    fs::create_directories(out);

    const fs::path figures_manifest = corpus / "figures.jsonl";
    const fs::path html_dir = corpus / "patents";
    const fs::path extracted_manifest = out / "manifest.extracted.jsonl";
    const fs::path diagnostics_dir = out / "diagnostics";
    const fs::path manifest_path = out / "manifest.jsonl";
    const fs::path drops_path = out / "preprocess_drops.jsonl";
    const fs::path orientation_path = out / "orientation.jsonl";
    const fs::path plans_path = out / "mask_plans.jsonl";
    const fs::path labels_path = out / "patch_labels.jsonl";
    const fs::path stats_path = out / "stats.json";
    const fs::path eval_path = out / "eval_report.json";
    const fs::path judge_path = out / "judge_scores.jsonl";
    const fs::path vocab(config.vocab_path);

    PipelineResult result;
    auto emit = [&](const json& event) {
        if (options.log) {
            options.log(event.dump());
        }
    };

    json stage_names = json::array();
    for (Stage s : stages) {
        stage_names.push_back(to_string(s));
    }
    emit({{"event", "pipeline"}, {"status", "start"}, {"stages", stage_names}});

    auto execute = [&](Stage stage, const std::vector<fs::path>& inputs,
                       const std::vector<fs::path>& outputs,
                       const std::function<std::size_t()>& body) {
        StageOutcome outcome;
        outcome.stage = stage;

        for (const fs::path& input : inputs) {
            if (!fs::exists(input)) {
                const std::string msg = std::string(to_string(stage)) +
                                        " stage: missing input " + input.string();
                emit({{"event", "stage"},
                      {"stage", to_string(stage)},
                      {"status", "error"},
                      {"message", msg}});
                throw Error(msg);
            }
        }
        if (!options.force && outputs_up_to_date(inputs, outputs)) {
            outcome.skip_reason = "up to date";
            emit({{"event", "stage"},
                  {"stage", to_string(stage)},
                  {"status", "skipped"},
                  {"reason", outcome.skip_reason}});
            result.outcomes.push_back(outcome);
            return;
        }

        emit({{"event", "stage"}, {"stage", to_string(stage)}, {"status", "start"}});
        const auto begin = std::chrono::steady_clock::now();
        try {
            outcome.items = body();
        } catch (const std::exception& e) {
            emit({{"event", "stage"},
                  {"stage", to_string(stage)},
                  {"status", "error"},
                  {"message", e.what()}});
            throw Error(std::string(to_string(stage)) + " stage failed: " + e.what());
        }
        const auto end = std::chrono::steady_clock::now();
        outcome.ran = true;
        outcome.elapsed_ms =
            std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(end - begin)
                .count();
        emit({{"event", "stage"},
              {"stage", to_string(stage)},
              {"status", "done"},
              {"items", outcome.items},
              {"elapsed_ms", outcome.elapsed_ms}});
        result.outcomes.push_back(outcome);
    };

    for (Stage stage : stages) {
        switch (stage) {
            case Stage::Extract:
                execute(stage, html_inputs(figures_manifest, html_dir), {extracted_manifest},
                        [&] {
                            return extract_stage(figures_manifest.string(), html_dir.string(),
                                                 extracted_manifest.string(),
                                                 diagnostics_dir.string(), tokenizer,
                                                 config.workers)
                                .extracted;
                        });
                break;
            case Stage::Preprocess:
                execute(stage, {extracted_manifest},
                        {manifest_path, drops_path, orientation_path}, [&] {
                            return preprocess_stage(extracted_manifest.string(),
                                                    config.min_publication_year,
                                                    manifest_path.string(), drops_path.string(),
                                                    orientation_path.string(), tokenizer,
                                                    config.workers)
                                .kept;
                        });
                break;
            case Stage::MaskPlan:
                execute(stage, {manifest_path, vocab}, {plans_path}, [&] {
                    return mask_plan_stage(manifest_path.string(), grid,
                                           config.token_mask_ratio, config.patch_mask_ratio,
                                           config.seed, config.patch_pool, plans_path.string(),
                                           tokenizer, config.workers)
                        .figures;
                });
                break;
            case Stage::Labels:
                execute(stage, {manifest_path}, {labels_path}, [&] {
                    return labels_stage(manifest_path.string(), grid, labels_path.string(),
                                        tokenizer, config.workers)
                        .figures;
                });
                break;
            case Stage::Stats:
                execute(stage, {manifest_path, vocab}, {stats_path}, [&] {
                    return stats_stage(manifest_path.string(), tokenizer, stats_path.string())
                        .figures;
                });
                break;
            case Stage::Eval: {
                if (config.paths.predictions.empty()) {
                    StageOutcome outcome;
                    outcome.stage = stage;
                    outcome.skip_reason = "no predictions configured";
                    emit({{"event", "stage"},
                          {"stage", to_string(stage)},
                          {"status", "skipped"},
                          {"reason", outcome.skip_reason}});
                    result.outcomes.push_back(outcome);
                    break;
                }
                const fs::path preds(config.paths.predictions);
                execute(stage, {manifest_path, preds, vocab}, {eval_path}, [&] {
                    return eval_stage(manifest_path.string(), preds.string(), config.eval,
                                      tokenizer, eval_path.string())
                        .scored;
                });
                break;
            }
            case Stage::Judge: {
                if (config.paths.predictions.empty()) {
                    throw Error("judge stage needs paths.predictions");
                }
                if (config.judge.prompt_dir.empty()) {
                    throw Error("judge stage needs judge.prompt_dir");
                }
                std::unique_ptr<ChatTransport> owned;
                ChatTransport* transport = options.judge_transport;
                if (transport == nullptr) {
                    if (config.judge.endpoint.empty()) {
                        throw Error("judge stage needs judge.endpoint or an injected transport");
                    }
                    HttpTransportConfig http;
                    http.endpoint = config.judge.endpoint;
                    http.model = config.judge.model;
                    owned = make_http_transport(http);
                    transport = owned.get();
                }
                const fs::path preds(config.paths.predictions);
                std::vector<fs::path> inputs = {manifest_path, preds};
                for (int v = 0; v < kPromptVariantCount; ++v) {
                    inputs.push_back(fs::path(config.judge.prompt_dir) /
                                     ("variant" + std::to_string(v) + ".system.txt"));
                    inputs.push_back(fs::path(config.judge.prompt_dir) /
                                     ("variant" + std::to_string(v) + ".user.txt"));
                }
                const DescriptionKind kind = config.eval.field == EvalField::Detailed
                                                 ? DescriptionKind::Detailed
                                                 : DescriptionKind::Brief;
                execute(stage, inputs, {judge_path}, [&] {
                    return judge_stage(manifest_path.string(), preds.string(), "", kind,
                                       *transport, config.judge, judge_path.string(), tokenizer,
                                       config.workers)
                        .samples;
                });
                break;
            }
        }
    }

    emit({{"event", "pipeline"}, {"status", "done"}});
    return result;
}

}  // namespace patfig
