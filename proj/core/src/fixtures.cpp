#include "patfig/fixtures.hpp"

#include <algorithm>
#include <filesystem>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "patfig/corpus.hpp"
#include "patfig/html_extract.hpp"
#include "patfig/util.hpp"

namespace patfig {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kNouns[] = {
    "processor",   "memory",    "controller", "interface", "sensor",
    "network",     "database",  "display",    "actuator",  "transmitter",
    "receiver",    "encoder",   "decoder",    "amplifier", "converter",
    "regulator",   "antenna",   "battery",    "scheduler", "multiplexer",
};
const char* kVerbs[] = {"illustrates", "depicts", "shows", "presents"};
const char* kKinds[] = {"block diagram", "flow chart", "schematic view", "circuit diagram"};
const char* kSubjects[] = {
    "a data processing system",      "a wireless communication device",
    "a power management apparatus",  "a storage subsystem",
    "an image processing pipeline",  "a sensor fusion arrangement",
};

struct Component {
    std::string noun;
    int number = 0;

    std::string phrase() const { return noun + " " + std::to_string(number); }
};

struct FixtureFigure {
    ManifestRecord record;  // paths relative to the corpus root
    std::vector<OcrToken> ocr;
    std::vector<OcrToken> ocr_rotated;  // present only for rotation cases
    std::vector<ElementBox> elements;
    std::vector<Component> components;
    int label_number = 0;
    std::string verb;
    std::string kind;
    std::string subject;
    std::string drop_reason;        // empty when kept
    bool duplicate_removed = false; // expected dedupe removal
    bool rotated_better = false;
    bool multi_label_sheet = false;
};

struct FixturePatent {
    std::string patent_id;
    int year = 0;
    Split split = Split::Train;
    std::vector<FixtureFigure> figures;  // document order
};

std::string figure_label_text(int number) { return "FIG. " + std::to_string(number); }

BoundingBox clamp_box(int x0, int y0, int x1, int y1) {
    auto clamp = [](int v) { return std::max(0, std::min(1000, v)); };
    return BoundingBox{clamp(x0), clamp(y0), clamp(x1), clamp(y1)};
}

/// OCR tokens and element boxes for one drawn figure: a label block at the
/// top and a column-pair layout of component blocks joined by arrows.
void populate_figure_content(FixtureFigure& fig, SplitMix64& rng) {
    const std::string label_number = std::to_string(fig.label_number);

    const int label_w = 30 * static_cast<int>(label_number.size());
    fig.ocr.push_back({"FIG.", clamp_box(60, 30, 150, 75), 0});
    fig.ocr.push_back({label_number, clamp_box(160, 30, 160 + label_w, 75), 0});
    fig.elements.push_back({ElementCategory::FigureLabel, clamp_box(50, 25, 200 + label_w, 85),
                            0.80 + 0.01 * static_cast<double>(rng.next_below(20))});

    int segment = 1;
    std::vector<std::pair<int, int>> anchors;
    for (std::size_t c = 0; c < fig.components.size(); ++c) {
        const Component& comp = fig.components[c];
        const int col = static_cast<int>(c % 2);
        const int row = static_cast<int>(c / 2);
        const int x = 90 + col * 460;
        const int y = 170 + row * 210;
        anchors.emplace_back(x + 150, y + 40);

        const int noun_w = 18 * static_cast<int>(comp.noun.size());
        fig.ocr.push_back({comp.noun, clamp_box(x, y, x + noun_w, y + 42), segment});
        fig.ocr.push_back({std::to_string(comp.number),
                           clamp_box(x + noun_w + 12, y, x + noun_w + 80, y + 42), segment});

        fig.elements.push_back({ElementCategory::Node, clamp_box(x - 25, y - 55, x + 330, y + 95),
                                0.80 + 0.01 * static_cast<double>(rng.next_below(20))});
        fig.elements.push_back({ElementCategory::Text, clamp_box(x - 4, y - 6, x + noun_w + 4, y + 48),
                                0.80 + 0.01 * static_cast<double>(rng.next_below(20))});
        fig.elements.push_back({ElementCategory::NodeLabel,
                                clamp_box(x + noun_w + 8, y - 6, x + noun_w + 86, y + 48),
                                0.80 + 0.01 * static_cast<double>(rng.next_below(20))});
        ++segment;
    }
    for (std::size_t c = 0; c + 1 < anchors.size(); ++c) {
        const auto [x0, y0] = anchors[c];
        const auto [x1, y1] = anchors[c + 1];
        fig.elements.push_back({ElementCategory::Arrow,
                                clamp_box(std::min(x0, x1), std::min(y0, y1) - 12,
                                          std::max(x0, x1) + 24, std::max(y0, y1) + 12),
                                0.80 + 0.01 * static_cast<double>(rng.next_below(20))});
    }
}

std::string brief_sentence(const FixtureFigure& fig) {
    return figure_label_text(fig.label_number) + " " + fig.verb + " a " + fig.kind + " of " +
           fig.subject + " in accordance with one or more embodiments of the present disclosure.";
}

std::string component_list(const FixtureFigure& fig) {
    std::ostringstream out;
    for (std::size_t c = 0; c < fig.components.size(); ++c) {
        if (c > 0) {
            out << (c + 1 == fig.components.size() ? " and " : ", ");
        }
        out << "a " << fig.components[c].phrase();
    }
    return out.str();
}

std::string detailed_opening(const FixtureFigure& fig) {
    // The leading label text mirrors the figref content, so the expected
    // paragraph text starts with it.
    return figure_label_text(fig.label_number) + " " + fig.verb + " a " + fig.kind +
           " including " + component_list(fig) + ". Each component is described in turn.";
}

std::string detailed_continuation(const FixtureFigure& fig) {
    const Component& first = fig.components.front();
    const Component& second = fig.components.back();
    return "The " + first.phrase() + " communicates with the " + second.phrase() +
           " over an internal bus. Operation proceeds under control of the " + first.phrase() +
           ".";
}

const std::string kMultiFigRemainder = "The method terminates after the final step.";
const std::string kConclusion =
    "The embodiments described above are illustrative and not restrictive. Various "
    "modifications will be apparent to those skilled in the art.";

std::string build_patent_html(const FixturePatent& patent, bool multi_ref_paragraph,
                              int multi_ref_after_label) {
    std::ostringstream html;
    html << "<html>\n<head><title>Patent " << patent.patent_id << "</title></head>\n<body>\n";
    html << "<h1>Apparatus and method</h1>\n";
    html << "<p>Publication year " << patent.year << ". All rights reserved.</p>\n";

    html << "<brief-description-of-drawings>\n";
    std::vector<int> seen_labels;
    for (const FixtureFigure& fig : patent.figures) {
        if (std::find(seen_labels.begin(), seen_labels.end(), fig.label_number) !=
            seen_labels.end()) {
            continue;  // a duplicated sheet shares its label's entry
        }
        seen_labels.push_back(fig.label_number);
        html << "  <description-line>" << brief_sentence(fig) << "</description-line>\n";
    }
    html << "</brief-description-of-drawings>\n";

    html << "<description-paragraph>DETAILED DESCRIPTION. The following description refers to "
            "the accompanying drawings. Reference numerals are used consistently "
            "throughout.</description-paragraph>\n";

    seen_labels.clear();
    for (const FixtureFigure& fig : patent.figures) {
        if (std::find(seen_labels.begin(), seen_labels.end(), fig.label_number) !=
            seen_labels.end()) {
            continue;
        }
        seen_labels.push_back(fig.label_number);
        const std::string opening = detailed_opening(fig);
        const std::string label = figure_label_text(fig.label_number);
        // The opening starts with the label text; emit it as a figref tag.
        html << "<description-paragraph><figref>" << label << "</figref>"
             << opening.substr(label.size()) << "</description-paragraph>\n";
        html << "<description-paragraph>" << detailed_continuation(fig)
             << "</description-paragraph>\n";
        if (multi_ref_paragraph && fig.label_number == multi_ref_after_label) {
            html << "<description-paragraph>As shown in <figref>FIG. 1</figref> and "
                    "<figref>FIG. 2</figref>, the components cooperate to perform the "
                    "disclosed method. "
                 << kMultiFigRemainder << "</description-paragraph>\n";
        }
    }
    html << "<description-paragraph>" << kConclusion << "</description-paragraph>\n";
    html << "</body>\n</html>\n";
    return html.str();
}

json ocr_to_json(const std::vector<OcrToken>& tokens) {
    json arr = json::array();
    for (const OcrToken& tok : tokens) {
        arr.push_back({{"text", tok.text},
                       {"box", {tok.box.x0, tok.box.y0, tok.box.x1, tok.box.y1}},
                       {"segment_id", tok.segment_id}});
    }
    return arr;
}

json elements_to_json(const std::vector<ElementBox>& elements) {
    json arr = json::array();
    for (const ElementBox& el : elements) {
        arr.push_back({{"category", to_string(el.category)},
                       {"box", {el.box.x0, el.box.y0, el.box.x1, el.box.y1}},
                       {"confidence", el.confidence}});
    }
    return arr;
}

json record_to_json(const ManifestRecord& rec) {
    json obj;
    obj["patent_id"] = rec.patent_id;
    obj["figure_id"] = rec.figure_id;
    if (rec.figure_label) {
        obj["figure_label"] = *rec.figure_label;
    } else {
        obj["figure_label"] = nullptr;
    }
    obj["image_width"] = rec.image_width;
    obj["image_height"] = rec.image_height;
    obj["split"] = to_string(rec.split);
    obj["brief"] = rec.descriptions.brief;
    obj["detailed"] = rec.descriptions.detailed;
    obj["ocr_path"] = rec.ocr_path;
    obj["elements_path"] = rec.elements_path;
    if (rec.ocr_rotated_path) {
        obj["ocr_rotated_path"] = *rec.ocr_rotated_path;
    }
    obj["is_plot"] = rec.is_plot;
    obj["publication_year"] = rec.publication_year;
    return obj;
}

}  // namespace

FixtureSummary generate_fixture_corpus(std::uint64_t seed, std::size_t patent_count,
                                       const std::string& out_dir) {
    if (patent_count == 0) {
        throw Error("fixture corpus needs at least one patent");
    }

    FixtureSummary summary;
    std::vector<FixturePatent> patents;
    patents.reserve(patent_count);

    for (std::size_t i = 0; i < patent_count; ++i) {
        FixturePatent patent;
        std::ostringstream pid;
        pid << "US" << 7000001 + 7 * i << "B2";
        patent.patent_id = pid.str();

        const bool pre_cutoff = i % 7 == 6;
        patent.year = pre_cutoff ? 2003 : 2005 + static_cast<int>(i % 16);
        const int split_slot = static_cast<int>(i % 5);
        patent.split = split_slot <= 2 ? Split::Train
                                       : (split_slot == 3 ? Split::Validation : Split::Test);
        if (pre_cutoff) {
            ++summary.pre_cutoff_patents;
        }

        SplitMix64 rng(mix_seed(seed, patent.patent_id));
        const std::size_t regular_figures = 1 + rng.next_below(3);
        const bool with_duplicate = i % 3 == 2;
        const bool with_plot = i % 5 == 4;
        const bool with_multi_sheet = i % 4 == 3;
        const bool with_rotation = i % 6 == 5;

        int next_label = 1;
        auto make_figure = [&](int label_number) {
            FixtureFigure fig;
            fig.label_number = label_number;
            fig.verb = kVerbs[rng.next_below(std::size(kVerbs))];
            fig.kind = kKinds[rng.next_below(std::size(kKinds))];
            fig.subject = kSubjects[rng.next_below(std::size(kSubjects))];
            const std::size_t component_count = 2 + rng.next_below(3);
            const std::size_t noun_offset = rng.next_below(std::size(kNouns));
            for (std::size_t c = 0; c < component_count; ++c) {
                Component comp;
                comp.noun = kNouns[(noun_offset + 3 * c) % std::size(kNouns)];
                comp.number = 100 + 2 * static_cast<int>(c) + 2;
                fig.components.push_back(std::move(comp));
            }
            populate_figure_content(fig, rng);

            ManifestRecord& rec = fig.record;
            rec.patent_id = patent.patent_id;
            rec.figure_id = patent.patent_id + "-FIG" + std::to_string(label_number);
            rec.figure_label = figure_label_text(label_number);
            rec.image_width = rng.next_below(2) == 0 ? 384 : 512;
            rec.image_height = rec.image_width;
            rec.split = patent.split;
            rec.publication_year = patent.year;
            rec.ocr_path = "ocr/" + rec.figure_id + ".json";
            rec.elements_path = "elements/" + rec.figure_id + ".json";
            return fig;
        };

        for (std::size_t f = 0; f < regular_figures; ++f) {
            patent.figures.push_back(make_figure(next_label++));
        }

        if (with_plot) {
            FixtureFigure fig = make_figure(next_label++);
            fig.record.is_plot = true;
            fig.drop_reason = "plot";
            patent.figures.push_back(std::move(fig));
            ++summary.plot_figures;
        }

        if (with_multi_sheet) {
            FixtureFigure fig = make_figure(next_label++);
            fig.multi_label_sheet = true;
            // A second label printed on the same sheet makes it multi-figure.
            fig.ocr.push_back({"FIG.", clamp_box(60, 880, 150, 925), 99});
            fig.ocr.push_back({"1", clamp_box(160, 880, 190, 925), 99});
            fig.drop_reason = "multi_figure";
            patent.figures.push_back(std::move(fig));
            ++summary.multi_figure_sheets;
        }

        if (with_rotation) {
            FixtureFigure& fig = patent.figures.front();
            // The stored pass reads badly; the rotated pass recovers it.
            fig.ocr_rotated = fig.ocr;
            fig.ocr.clear();
            for (const OcrToken& tok : fig.ocr_rotated) {
                for (std::size_t k = 0; k < tok.text.size(); k += 2) {
                    OcrToken piece;
                    piece.text = tok.text.substr(k, 1);
                    piece.box = tok.box;
                    piece.segment_id = tok.segment_id;
                    fig.ocr.push_back(std::move(piece));
                }
            }
            fig.rotated_better = true;
            fig.record.ocr_rotated_path = "ocr/" + fig.record.figure_id + ".rotated.json";
            ++summary.rotated_figures;
        }

        if (with_duplicate) {
            // The duplicated representative sheet precedes the original and
            // shares its label and dimensions.
            FixtureFigure dup = patent.figures.front();
            dup.record.figure_id = patent.patent_id + "-FIG1-rep";
            dup.record.ocr_path = "ocr/" + dup.record.figure_id + ".json";
            dup.record.elements_path = "elements/" + dup.record.figure_id + ".json";
            if (dup.record.ocr_rotated_path) {
                dup.record.ocr_rotated_path = "ocr/" + dup.record.figure_id + ".rotated.json";
            }
            dup.duplicate_removed = true;
            dup.drop_reason.clear();
            patent.figures.insert(patent.figures.begin(), std::move(dup));
            ++summary.duplicate_pairs;
        }

        if (pre_cutoff) {
            for (FixtureFigure& fig : patent.figures) {
                if (!fig.duplicate_removed) {
                    fig.drop_reason = "date";  // the date filter outranks other reasons
                }
            }
        }

        patents.push_back(std::move(patent));
    }

    // Distinct labels present in each patent's document decide whether the
    // cross-reference paragraph (FIG. 1 with FIG. 2) can appear.
    const fs::path root(out_dir);
    fs::create_directories(root / "patents");
    fs::create_directories(root / "ocr");
    fs::create_directories(root / "elements");
    fs::create_directories(root / "expected");
    fs::create_directories(root / "preds");

    std::ostringstream figures_jsonl;
    std::ostringstream extracted_jsonl;
    std::ostringstream kept_jsonl;
    std::ostringstream drops_jsonl;
    std::ostringstream preds_jsonl;
    std::vector<json> dedupe_drops;
    std::vector<json> filter_drops;

    for (FixturePatent& patent : patents) {
        std::vector<int> labels;
        for (const FixtureFigure& fig : patent.figures) {
            if (std::find(labels.begin(), labels.end(), fig.label_number) == labels.end()) {
                labels.push_back(fig.label_number);
            }
        }
        const bool multi_ref = labels.size() >= 2;
        // The cross-reference paragraph follows the last regular figure that
        // is numbered 2, keeping its remainder sentence attached to FIG. 2.
        const int multi_ref_after = 2;
        const bool emits_multi_ref =
            multi_ref && std::find(labels.begin(), labels.end(), 2) != labels.end();

        const std::string html =
            build_patent_html(patent, emits_multi_ref, multi_ref_after);
        write_text_file_atomic((root / "patents" / (patent.patent_id + ".html")).string(), html);

        // Expected extraction, from the same construction choices.
        const int last_label = labels.back();
        for (FixtureFigure& fig : patent.figures) {
            fig.record.descriptions.brief = brief_sentence(fig);
            std::string detailed = detailed_opening(fig) + " " + detailed_continuation(fig);
            if (emits_multi_ref && fig.label_number == multi_ref_after) {
                detailed += " " + kMultiFigRemainder;
            }
            if (fig.label_number == last_label) {
                detailed += " " + kConclusion;
            }
            fig.record.descriptions.detailed = detailed;
        }

        for (const FixtureFigure& fig : patent.figures) {
            write_text_file_atomic((root / fig.record.ocr_path).string(),
                                   ocr_to_json(fig.ocr).dump(2) + "\n");
            if (!fig.ocr_rotated.empty()) {
                write_text_file_atomic((root / *fig.record.ocr_rotated_path).string(),
                                       ocr_to_json(fig.ocr_rotated).dump(2) + "\n");
            }
            write_text_file_atomic((root / fig.record.elements_path).string(),
                                   elements_to_json(fig.elements).dump(2) + "\n");

            ManifestRecord bare = fig.record;
            bare.descriptions = {};
            figures_jsonl << record_to_json(bare).dump() << '\n';
            extracted_jsonl << record_to_json(fig.record).dump() << '\n';
            ++summary.figures;

            if (fig.duplicate_removed) {
                dedupe_drops.push_back(
                    {{"figure_id", fig.record.figure_id}, {"reason", "duplicate_representative"}});
                continue;
            }
            if (!fig.drop_reason.empty()) {
                filter_drops.push_back(
                    {{"figure_id", fig.record.figure_id}, {"reason", fig.drop_reason}});
                ++summary.expected_dropped;
                continue;
            }

            ManifestRecord kept = fig.record;
            if (fig.rotated_better) {
                kept.ocr_path = *kept.ocr_rotated_path;
                kept.ocr_rotated_path.reset();
            }
            kept_jsonl << record_to_json(kept).dump() << '\n';
            preds_jsonl << json({{"figure_id", kept.figure_id},
                                 {"text", kept.descriptions.brief}})
                               .dump()
                        << '\n';
            ++summary.expected_kept;
        }
    }

    for (const json& drop : dedupe_drops) {
        drops_jsonl << drop.dump() << '\n';
    }
    for (const json& drop : filter_drops) {
        drops_jsonl << drop.dump() << '\n';
    }

    write_text_file_atomic((root / "figures.jsonl").string(), figures_jsonl.str());
    write_text_file_atomic((root / "expected" / "extracted.jsonl").string(),
                           extracted_jsonl.str());
    write_text_file_atomic((root / "expected" / "manifest.jsonl").string(), kept_jsonl.str());
    write_text_file_atomic((root / "expected" / "drops.jsonl").string(), drops_jsonl.str());
    write_text_file_atomic((root / "preds" / "identity_brief.jsonl").string(), preds_jsonl.str());

    summary.patents = patent_count;
    return summary;
}

}  // namespace patfig
