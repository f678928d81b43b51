#include "patfig/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "patfig/tokenizer.hpp"
#include "patfig/util.hpp"

namespace patfig {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        throw Error("invalid JSON in " + what);
    }
    return value;
}

const json& require_key(const json& obj, const char* key, const std::string& what) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw Error("missing key '" + std::string(key) + "' in " + what);
    }
    return *it;
}

BoundingBox parse_box(const json& value, const std::string& what) {
    if (!value.is_array() || value.size() != 4) {
        throw Error("box must be a 4-element array in " + what);
    }
    BoundingBox box{value[0].get<int>(), value[1].get<int>(), value[2].get<int>(),
                    value[3].get<int>()};
    if (!box.valid()) {
        std::ostringstream msg;
        msg << "box [" << box.x0 << ", " << box.y0 << ", " << box.x1 << ", " << box.y1
            << "] out of range in " << what;
        throw Error(msg.str());
    }
    return box;
}

json box_to_json(const BoundingBox& box) {
    return json::array({box.x0, box.y0, box.x1, box.y1});
}

}  // namespace

const char* to_string(ElementCategory c) {
    switch (c) {
        case ElementCategory::Node: return "node";
        case ElementCategory::NodeLabel: return "node_label";
        case ElementCategory::FigureLabel: return "figure_label";
        case ElementCategory::Text: return "text";
        case ElementCategory::Arrow: return "arrow";
    }
    throw Error("unknown element category");
}

ElementCategory element_category_from_string(const std::string& s) {
    for (ElementCategory c : kAllElementCategories) {
        if (s == to_string(c)) {
            return c;
        }
    }
    throw Error("unknown element category '" + s + "'");
}

const char* to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    throw Error("unknown split");
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "validation") return Split::Validation;
    if (s == "test") return Split::Test;
    throw Error("unknown split '" + s + "'");
}

std::string CorpusManifest::resolve_path(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) {
        return path;
    }
    return (std::filesystem::path(base_dir) / p).string();
}

CorpusManifest load_manifest(const std::string& path, const BpeTokenizer& tokenizer) {
    CorpusManifest manifest;
    manifest.base_dir = std::filesystem::path(path).parent_path().string();

    std::unordered_set<std::string> seen_ids;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::ostringstream where;
        where << "manifest line " << line_no;
        json obj = parse_json(line, where.str());
        if (!obj.is_object()) {
            throw Error(where.str() + " is not a JSON object");
        }

        ManifestRecord rec;
        rec.patent_id = require_key(obj, "patent_id", where.str()).get<std::string>();
        rec.figure_id = require_key(obj, "figure_id", where.str()).get<std::string>();
        const json& label = require_key(obj, "figure_label", where.str());
        if (!label.is_null()) {
            rec.figure_label = label.get<std::string>();
        }
        rec.image_width = require_key(obj, "image_width", where.str()).get<int>();
        rec.image_height = require_key(obj, "image_height", where.str()).get<int>();
        if (rec.image_width <= 0 || rec.image_height <= 0) {
            throw Error("non-positive image dimensions in " + where.str());
        }
        rec.split = split_from_string(require_key(obj, "split", where.str()).get<std::string>());
        rec.descriptions.brief = require_key(obj, "brief", where.str()).get<std::string>();
        rec.descriptions.detailed = require_key(obj, "detailed", where.str()).get<std::string>();
        rec.ocr_path = require_key(obj, "ocr_path", where.str()).get<std::string>();
        rec.elements_path = require_key(obj, "elements_path", where.str()).get<std::string>();
        if (auto it = obj.find("ocr_rotated_path"); it != obj.end() && !it->is_null()) {
            rec.ocr_rotated_path = it->get<std::string>();
        }
        if (auto it = obj.find("is_plot"); it != obj.end()) {
            rec.is_plot = it->get<bool>();
        }
        if (auto it = obj.find("publication_year"); it != obj.end()) {
            rec.publication_year = it->get<int>();
        }

        rec.descriptions.brief_token_count = tokenizer.count_tokens(rec.descriptions.brief);
        rec.descriptions.detailed_token_count = tokenizer.count_tokens(rec.descriptions.detailed);

        if (!seen_ids.insert(rec.figure_id).second) {
            throw Error("duplicate figure id '" + rec.figure_id + "' in manifest");
        }
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
    std::ostringstream out;
    for (const ManifestRecord& rec : manifest.records) {
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
        out << obj.dump() << '\n';
    }
    write_text_file_atomic(path, out.str());
}

std::vector<OcrToken> load_ocr_file(const std::string& path) {
    json arr = parse_json(read_text_file(path), path);
    if (!arr.is_array()) {
        throw Error("OCR file " + path + " is not a JSON array");
    }
    std::vector<OcrToken> tokens;
    tokens.reserve(arr.size());
    std::size_t index = 0;
    for (const json& obj : arr) {
        std::ostringstream where;
        where << path << " entry " << index++;
        OcrToken tok;
        tok.text = require_key(obj, "text", where.str()).get<std::string>();
        tok.box = parse_box(require_key(obj, "box", where.str()), where.str());
        tok.segment_id = require_key(obj, "segment_id", where.str()).get<int>();
        tokens.push_back(std::move(tok));
    }
    return tokens;
}

std::vector<ElementBox> load_elements_file(const std::string& path) {
    json arr = parse_json(read_text_file(path), path);
    if (!arr.is_array()) {
        throw Error("elements file " + path + " is not a JSON array");
    }
    std::vector<ElementBox> elements;
    elements.reserve(arr.size());
    std::size_t index = 0;
    for (const json& obj : arr) {
        std::ostringstream where;
        where << path << " entry " << index++;
        ElementBox el;
        el.category =
            element_category_from_string(require_key(obj, "category", where.str()).get<std::string>());
        el.box = parse_box(require_key(obj, "box", where.str()), where.str());
        el.confidence = require_key(obj, "confidence", where.str()).get<double>();
        if (el.confidence < 0.0 || el.confidence > 1.0) {
            throw Error("confidence out of [0, 1] in " + where.str());
        }
        elements.push_back(el);
    }
    return elements;
}

void save_ocr_file(const std::vector<OcrToken>& tokens, const std::string& path) {
    json arr = json::array();
    for (const OcrToken& tok : tokens) {
        json obj;
        obj["text"] = tok.text;
        obj["box"] = box_to_json(tok.box);
        obj["segment_id"] = tok.segment_id;
        arr.push_back(std::move(obj));
    }
    write_text_file_atomic(path, arr.dump(2) + "\n");
}

void save_elements_file(const std::vector<ElementBox>& elements, const std::string& path) {
    json arr = json::array();
    for (const ElementBox& el : elements) {
        json obj;
        obj["category"] = to_string(el.category);
        obj["box"] = box_to_json(el.box);
        obj["confidence"] = el.confidence;
        arr.push_back(std::move(obj));
    }
    write_text_file_atomic(path, arr.dump(2) + "\n");
}

const SplitStats& CorpusStats::for_split(Split s) const {
    switch (s) {
        case Split::Train: return train;
        case Split::Validation: return validation;
        case Split::Test: return test;
    }
    throw Error("unknown split");
}

CorpusStats compute_stats(const CorpusManifest& manifest) {
    if (manifest.records.empty()) {
        throw Error("cannot compute statistics for an empty manifest");
    }

    struct Accum {
        std::size_t images = 0;
        std::size_t brief_tokens = 0;
        std::size_t detailed_tokens = 0;
        std::set<std::string> patents;
    };
    std::array<Accum, 3> accums;

    for (const ManifestRecord& rec : manifest.records) {
        Accum& a = accums[static_cast<int>(rec.split)];
        ++a.images;
        a.brief_tokens += rec.descriptions.brief_token_count;
        a.detailed_tokens += rec.descriptions.detailed_token_count;
        a.patents.insert(rec.patent_id);
    }

    CorpusStats stats;
    std::array<SplitStats*, 3> rows = {&stats.train, &stats.validation, &stats.test};
    for (int i = 0; i < 3; ++i) {
        const Accum& a = accums[i];
        SplitStats& row = *rows[i];
        row.image_count = a.images;
        row.unique_patents = a.patents.size();
        if (a.images > 0) {
            row.avg_brief_tokens = static_cast<double>(a.brief_tokens) / a.images;
            row.avg_detailed_tokens = static_cast<double>(a.detailed_tokens) / a.images;
            row.avg_images_per_patent = static_cast<double>(a.images) / a.patents.size();
            row.averages_defined = true;
        }
    }
    return stats;
}

std::vector<std::string> check_split_exclusivity(const CorpusManifest& manifest) {
    std::unordered_set<std::string> train_patents;
    std::unordered_set<std::string> eval_patents;
    for (const ManifestRecord& rec : manifest.records) {
        if (rec.split == Split::Train) {
            train_patents.insert(rec.patent_id);
        } else {
            eval_patents.insert(rec.patent_id);
        }
    }
    std::vector<std::string> offenders;
    for (const std::string& patent : train_patents) {
        if (eval_patents.count(patent) > 0) {
            offenders.push_back(patent);
        }
    }
    std::sort(offenders.begin(), offenders.end());
    return offenders;
}

}  // namespace patfig
