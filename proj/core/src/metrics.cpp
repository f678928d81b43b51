#include "patfig/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "patfig/util.hpp"

namespace patfig {

namespace {

bool is_ascii_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_alnum(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_ascii_punct(unsigned char c) {
    return c >= 0x21 && c <= 0x7e && !is_ascii_alnum(c);
}

char ascii_lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

/// Multiset of n-grams keyed by unit-separator-joined tokens.
using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (tokens.size() < static_cast<std::size_t>(n)) {
        return counts;
    }
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int j = 1; j < n; ++j) {
            key += '\x1f';
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

std::size_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
    std::size_t overlap = 0;
    for (const auto& [key, count] : cand) {
        auto it = ref.find(key);
        if (it != ref.end()) {
            overlap += std::min(count, it->second);
        }
    }
    return overlap;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) {
        return 0;
    }
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> curr(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) {
                curr[j] = prev[j - 1] + 1;
            } else {
                curr[j] = std::max(prev[j], curr[j - 1]);
            }
        }
        std::swap(prev, curr);
    }
    return prev[b.size()];
}

double f1(double p, double r) {
    return (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
}

struct BleuCounts {
    std::array<std::size_t, 4> matched = {0, 0, 0, 0};
    std::array<std::size_t, 4> available = {0, 0, 0, 0};
    std::size_t cand_len = 0;
    std::size_t ref_len = 0;

    void add_pair(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
        cand_len += cand.size();
        ref_len += ref.size();
        for (int n = 1; n <= 4; ++n) {
            if (cand.size() < static_cast<std::size_t>(n)) {
                continue;
            }
            available[n - 1] += cand.size() - n + 1;
            matched[n - 1] += clipped_overlap(count_ngrams(cand, n), count_ngrams(ref, n));
        }
    }

    double score(int n, const BleuOptions& options) const {
        if (cand_len == 0) {
            return 0.0;
        }
        double log_sum = 0.0;
        for (int i = 1; i <= n; ++i) {
            double m = static_cast<double>(matched[i - 1]);
            double a = static_cast<double>(available[i - 1]);
            if (options.smooth_higher_orders && i > 1) {
                m += 1.0;
                a += 1.0;
            }
            if (m <= 0.0 || a <= 0.0) {
                return 0.0;
            }
            log_sum += std::log(m / a);
        }
        const double geo_mean = std::exp(log_sum / n);
        const double bp =
            cand_len >= ref_len
                ? 1.0
                : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
        return bp * geo_mean;
    }
};

/// Candidate-to-reference unigram alignment. Greedy left to right, preferring
/// the reference position just after the previous match so runs stay in one
/// chunk, otherwise the earliest unmatched occurrence.
struct MeteorAlignment {
    std::vector<std::ptrdiff_t> match;  // per candidate index, ref index or -1
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

template <typename Key>
void align_stage(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                 std::vector<std::ptrdiff_t>& match, std::vector<bool>& ref_used, Key&& key) {
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (match[i] >= 0) {
            continue;
        }
        const std::string k = key(cand[i]);
        std::ptrdiff_t prev_ref = -1;
        for (std::size_t back = i; back > 0; --back) {
            if (match[back - 1] >= 0) {
                prev_ref = match[back - 1];
                break;
            }
        }
        const std::ptrdiff_t preferred = prev_ref + 1;
        if (preferred >= 0 && preferred < static_cast<std::ptrdiff_t>(ref.size()) &&
            !ref_used[preferred] && key(ref[preferred]) == k) {
            match[i] = preferred;
            ref_used[preferred] = true;
            continue;
        }
        for (std::size_t j = 0; j < ref.size(); ++j) {
            if (!ref_used[j] && key(ref[j]) == k) {
                match[i] = static_cast<std::ptrdiff_t>(j);
                ref_used[j] = true;
                break;
            }
        }
    }
}

MeteorAlignment align_meteor(const std::vector<std::string>& cand,
                             const std::vector<std::string>& ref, bool stem_stage) {
    MeteorAlignment out;
    out.match.assign(cand.size(), -1);
    std::vector<bool> ref_used(ref.size(), false);

    align_stage(cand, ref, out.match, ref_used, [](const std::string& t) { return t; });
    if (stem_stage) {
        align_stage(cand, ref, out.match, ref_used,
                    [](const std::string& t) { return stem_token(t); });
    }

    std::ptrdiff_t prev_cand = -1;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (out.match[i] < 0) {
            continue;
        }
        ++out.matches;
        const bool continues = prev_cand >= 0 &&
                               prev_cand == static_cast<std::ptrdiff_t>(i) - 1 &&
                               out.match[prev_cand] + 1 == out.match[i];
        if (!continues) {
            ++out.chunks;
        }
        prev_cand = static_cast<std::ptrdiff_t>(i);
    }
    return out;
}

}  // namespace

std::vector<std::string> metric_tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_ascii_space(c)) {
            flush();
        } else if (is_ascii_punct(c)) {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
        } else {
            current += ascii_lower(c);
        }
    }
    flush();
    return tokens;
}

double bleu_n(const std::string& candidate, const std::string& reference, int n,
              const BleuOptions& options) {
    if (n < 1) {
        throw Error("bleu order must be at least 1");
    }
    BleuCounts counts;
    counts.add_pair(metric_tokenize(candidate), metric_tokenize(reference));
    return counts.score(n, options);
}

double avg_bleu(const std::string& candidate, const std::string& reference,
                const BleuOptions& options) {
    double sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        sum += bleu_n(candidate, reference, n, options);
    }
    return sum / 4.0;
}

double rouge_n(const std::string& candidate, const std::string& reference, int n) {
    if (n < 1) {
        throw Error("rouge order must be at least 1");
    }
    const std::vector<std::string> cand = metric_tokenize(candidate);
    const std::vector<std::string> ref = metric_tokenize(reference);
    const NgramCounts cand_counts = count_ngrams(cand, n);
    const NgramCounts ref_counts = count_ngrams(ref, n);
    std::size_t cand_total = 0;
    for (const auto& [key, count] : cand_counts) {
        cand_total += count;
    }
    std::size_t ref_total = 0;
    for (const auto& [key, count] : ref_counts) {
        ref_total += count;
    }
    if (cand_total == 0 && ref_total == 0) {
        return 0.0;
    }
    const std::size_t overlap = clipped_overlap(cand_counts, ref_counts);
    const double p = cand_total > 0 ? static_cast<double>(overlap) / cand_total : 0.0;
    const double r = ref_total > 0 ? static_cast<double>(overlap) / ref_total : 0.0;
    return f1(p, r);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    const std::vector<std::string> cand = metric_tokenize(candidate);
    const std::vector<std::string> ref = metric_tokenize(reference);
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    const double l = static_cast<double>(lcs_length(cand, ref));
    return f1(l / cand.size(), l / ref.size());
}

std::string stem_token(const std::string& token) {
    struct Rule {
        const char* suffix;
        const char* replacement;
        std::size_t min_stem;  // required length of what remains
    };
    // Longest suffix first; at most one rule fires.
    static constexpr Rule rules[] = {
        {"sses", "ss", 1}, {"ies", "i", 1}, {"ing", "", 3},
        {"es", "", 1},     {"ed", "", 2},   {"ly", "", 1},
        {"s", "", 1},
    };
    for (const Rule& rule : rules) {
        const std::size_t len = std::char_traits<char>::length(rule.suffix);
        if (token.size() <= len || token.compare(token.size() - len, len, rule.suffix) != 0) {
            continue;
        }
        if (token.size() - len < rule.min_stem) {
            continue;
        }
        if (rule.suffix[0] == 's' && rule.suffix[1] == '\0' &&
            token.size() >= 2 && token[token.size() - 2] == 's') {
            continue;  // plain-s rule skips words ending in "ss"
        }
        return token.substr(0, token.size() - len) + rule.replacement;
    }
    return token;
}

double meteor(const std::string& candidate, const std::string& reference,
              const MeteorOptions& options) {
    const std::vector<std::string> cand = metric_tokenize(candidate);
    const std::vector<std::string> ref = metric_tokenize(reference);
    if (cand.empty() || ref.empty()) {
        return 0.0;
    }
    const MeteorAlignment alignment = align_meteor(cand, ref, options.stem_matching);
    if (alignment.matches == 0) {
        return 0.0;
    }
    const double m = static_cast<double>(alignment.matches);
    const double p = m / cand.size();
    const double r = m / ref.size();
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(alignment.chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    return f_mean * (1.0 - penalty);
}

double render_score(double score01) {
    return std::round(score01 * 100.0 * 100.0) / 100.0;
}

MetricReport evaluate_corpus(const std::map<std::string, std::string>& predictions,
                             const CorpusManifest& manifest, const EvalOptions& options) {
    if (predictions.empty()) {
        throw Error("no predictions to evaluate");
    }

    std::unordered_map<std::string, const ManifestRecord*> by_id;
    for (const ManifestRecord& rec : manifest.records) {
        by_id.emplace(rec.figure_id, &rec);
    }

    std::vector<std::string> missing;
    for (const auto& [id, text] : predictions) {
        if (by_id.find(id) == by_id.end()) {
            missing.push_back(id);
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "predictions without a reference:";
        for (const std::string& id : missing) {
            msg << ' ' << id;
        }
        throw Error(msg.str());
    }

    BleuCounts corpus_counts;
    std::array<double, 4> sentence_bleu_sums = {0.0, 0.0, 0.0, 0.0};
    double r1_sum = 0.0;
    double r2_sum = 0.0;
    double rl_sum = 0.0;
    double meteor_sum = 0.0;
    std::size_t scored = 0;

    for (const auto& [id, candidate] : predictions) {
        const ManifestRecord& rec = *by_id.at(id);
        if (options.split && rec.split != *options.split) {
            if (options.warnings != nullptr) {
                options.warnings->push_back("prediction for '" + id +
                                            "' is outside the evaluated split; skipped");
            }
            continue;
        }
        const std::string& reference = options.field == EvalField::Brief
                                           ? rec.descriptions.brief
                                           : rec.descriptions.detailed;
        const std::vector<std::string> cand_tokens = metric_tokenize(candidate);
        const std::vector<std::string> ref_tokens = metric_tokenize(reference);
        corpus_counts.add_pair(cand_tokens, ref_tokens);
        if (options.sentence_level_bleu) {
            BleuCounts pair_counts;
            pair_counts.add_pair(cand_tokens, ref_tokens);
            for (int n = 1; n <= 4; ++n) {
                sentence_bleu_sums[n - 1] += pair_counts.score(n, options.bleu);
            }
        }
        r1_sum += rouge_n(candidate, reference, 1);
        r2_sum += rouge_n(candidate, reference, 2);
        rl_sum += rouge_l(candidate, reference);
        meteor_sum += meteor(candidate, reference, options.meteor);
        ++scored;
    }

    if (scored == 0) {
        throw Error("no predictions matched the evaluated split");
    }

    MetricReport report;
    report.sample_count = scored;
    report.smoothing = options.bleu.smooth_higher_orders;
    report.sentence_level_bleu = options.sentence_level_bleu;
    report.meteor_variant = options.meteor.stem_matching ? "meteor-es" : "meteor-e";
    if (options.sentence_level_bleu) {
        report.b1 = sentence_bleu_sums[0] / scored;
        report.b2 = sentence_bleu_sums[1] / scored;
        report.b3 = sentence_bleu_sums[2] / scored;
        report.b4 = sentence_bleu_sums[3] / scored;
    } else {
        report.b1 = corpus_counts.score(1, options.bleu);
        report.b2 = corpus_counts.score(2, options.bleu);
        report.b3 = corpus_counts.score(3, options.bleu);
        report.b4 = corpus_counts.score(4, options.bleu);
    }
    report.avg_b = (report.b1 + report.b2 + report.b3 + report.b4) / 4.0;
    report.r1 = r1_sum / scored;
    report.r2 = r2_sum / scored;
    report.rl = rl_sum / scored;
    report.meteor = meteor_sum / scored;
    return report;
}

std::string report_to_json(const MetricReport& report) {
    nlohmann::json obj;
    obj["b1"] = render_score(report.b1);
    obj["b2"] = render_score(report.b2);
    obj["b3"] = render_score(report.b3);
    obj["b4"] = render_score(report.b4);
    obj["avg_b"] = render_score(report.avg_b);
    obj["r1"] = render_score(report.r1);
    obj["r2"] = render_score(report.r2);
    obj["rl"] = render_score(report.rl);
    obj["meteor"] = render_score(report.meteor);
    obj["sample_count"] = report.sample_count;
    obj["tokenizer"] = report.tokenizer_id;
    obj["meteor_variant"] = report.meteor_variant;
    obj["smoothing"] = report.smoothing;
    obj["sentence_level_bleu"] = report.sentence_level_bleu;
    return obj.dump(2) + "\n";
}

std::map<std::string, std::string> load_predictions(const std::string& path) {
    std::map<std::string, std::string> predictions;
    std::size_t line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("figure_id") ||
            !obj.contains("text")) {
            std::ostringstream msg;
            msg << "malformed prediction on line " << line_no << " of " << path;
            throw Error(msg.str());
        }
        const std::string id = obj["figure_id"].get<std::string>();
        if (!predictions.emplace(id, obj["text"].get<std::string>()).second) {
            throw Error("duplicate prediction for figure '" + id + "'");
        }
    }
    return predictions;
}

}  // namespace patfig
