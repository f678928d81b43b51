#include "patfig/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "patfig/util.hpp"

namespace patfig {

namespace {

std::string lower_ascii(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) {
        --end;
    }
    return s.substr(begin, end - begin);
}

void replace_all(std::string& text, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::size_t find_ci(const std::string& haystack, const std::string& needle_lower) {
    const std::string lowered = lower_ascii(haystack);
    return lowered.find(needle_lower);
}

}  // namespace

PromptLibrary PromptLibrary::load(const std::string& dir) {
    PromptLibrary lib;
    for (int i = 0; i < kPromptVariantCount; ++i) {
        std::ostringstream base;
        base << dir << "/variant" << i;
        lib.system_[i] = read_text_file(base.str() + ".system.txt");
        lib.user_[i] = read_text_file(base.str() + ".user.txt");
        if (trim(lib.system_[i]).empty() || trim(lib.user_[i]).empty()) {
            throw Error("prompt variant " + std::to_string(i) + " in " + dir + " is empty");
        }
    }
    return lib;
}

std::pair<std::string, std::string> PromptLibrary::build_prompt(const JudgeRequest& req) const {
    if (req.variant < 0 || req.variant >= kPromptVariantCount) {
        throw Error("prompt variant " + std::to_string(req.variant) + " out of range");
    }
    if (req.ground_truth.empty() || req.generated.empty()) {
        throw Error("judge request needs non-empty ground-truth and generated texts");
    }
    std::string system = system_[req.variant];
    if (req.kind == DescriptionKind::Detailed) {
        replace_all(system, "brief", "detailed");
    }
    std::string user = user_[req.variant];
    replace_all(user, "#img_url#", req.image_ref);
    replace_all(user, "#gt_desc#", req.ground_truth);
    replace_all(user, "#gen_desc#", req.generated);
    return {std::move(system), std::move(user)};
}

JudgeScores parse_judge_scores(const std::string& response_text) {
    auto fail = [&](const std::string& why) -> Error {
        return Error("judge response parse error: " + why + "; raw response: " + response_text);
    };

    const std::size_t open = find_ci(response_text, "<results>");
    if (open == std::string::npos) {
        throw fail("missing <results> tag");
    }
    const std::size_t body_start = open + std::string("<results>").size();
    std::size_t close = find_ci(response_text.substr(body_start), "</results>");
    if (close == std::string::npos) {
        throw fail("missing </results> tag");
    }
    const std::string body = response_text.substr(body_start, close);

    JudgeScores scores;
    std::array<bool, kJudgeCriterionCount> seen = {};
    std::istringstream lines(body);
    std::string line;
    while (std::getline(lines, line)) {
        const std::size_t colon = line.find(':');
        if (colon == std::string::npos) {
            continue;
        }
        const std::string name = lower_ascii(trim(line.substr(0, colon)));
        int index = -1;
        for (int i = 0; i < kJudgeCriterionCount; ++i) {
            if (name == lower_ascii(kJudgeCriteria[i])) {
                index = i;
                break;
            }
        }
        if (index < 0) {
            continue;
        }
        if (seen[index]) {
            continue;  // first occurrence wins
        }
        std::string value = trim(line.substr(colon + 1));
        while (!value.empty() && value.back() == '.') {
            value.pop_back();
        }
        value = trim(value);
        if (value.empty()) {
            throw fail(std::string(kJudgeCriteria[index]) + " has no value");
        }
        std::size_t used = 0;
        int parsed = 0;
        try {
            parsed = std::stoi(value, &used);
        } catch (const std::exception&) {
            throw fail(std::string(kJudgeCriteria[index]) + " value '" + value +
                       "' is not an integer");
        }
        if (used != value.size()) {
            throw fail(std::string(kJudgeCriteria[index]) + " value '" + value +
                       "' is not an integer");
        }
        if (parsed < 0 || parsed > 2) {
            throw fail(std::string(kJudgeCriteria[index]) + " score " + std::to_string(parsed) +
                       " outside {0,1,2}");
        }
        scores.values[index] = parsed;
        seen[index] = true;
    }

    for (int i = 0; i < kJudgeCriterionCount; ++i) {
        if (!seen[i]) {
            throw fail(std::string("missing criterion ") + kJudgeCriteria[i]);
        }
    }
    return scores;
}

std::string format_score_block(const JudgeScores& scores) {
    std::ostringstream out;
    out << "<results>\n";
    for (int i = 0; i < kJudgeCriterionCount; ++i) {
        out << kJudgeCriteria[i] << ": " << scores.values[i] << '\n';
    }
    out << "</results>";
    return out.str();
}

namespace {

class HttpChatTransport : public ChatTransport {
  public:
    explicit HttpChatTransport(HttpTransportConfig config) : config_(std::move(config)) {
        std::string rest;
        if (config_.endpoint.rfind("http://", 0) == 0) {
            rest = config_.endpoint.substr(7);
            scheme_ = "http";
        } else if (config_.endpoint.rfind("https://", 0) == 0) {
            rest = config_.endpoint.substr(8);
            scheme_ = "https";
        } else {
            throw Error("endpoint must start with http:// or https://");
        }
        const std::size_t slash = rest.find('/');
        host_ = slash == std::string::npos ? rest : rest.substr(0, slash);
        path_ = slash == std::string::npos ? "" : rest.substr(slash);
        if (host_.empty()) {
            throw Error("endpoint has no host");
        }
        if (path_.empty() || path_ == "/") {
            path_ = "/v1/chat/completions";
        }
    }

    std::string complete(const ChatRequest& request) override {
        nlohmann::json body;
        body["model"] = request.model;
        body["temperature"] = request.temperature;
        body["messages"] = nlohmann::json::array();
        for (const ChatMessage& message : request.messages) {
            body["messages"].push_back({{"role", message.role}, {"content", message.content}});
        }

        httplib::Headers headers;
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        if (scheme_ == "https") {
            throw Error("https endpoints need a TLS-enabled build; use an http proxy endpoint");
        }
        httplib::Client client(("http://" + host_).c_str());
        client.set_connection_timeout(config_.timeout_seconds);
        client.set_read_timeout(config_.timeout_seconds);
        auto res = client.Post(path_.c_str(), headers, body.dump(), "application/json");
        if (!res) {
            throw Error("chat request to " + host_ + " failed: no response");
        }
        if (res->status != 200) {
            throw Error("chat request to " + host_ + " failed with status " +
                        std::to_string(res->status));
        }
        nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw Error("chat response is not valid JSON");
        }
        try {
            return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception&) {
            throw Error("chat response missing choices[0].message.content");
        }
    }

  private:
    HttpTransportConfig config_;
    std::string scheme_;
    std::string host_;
    std::string path_;
};

}  // namespace

std::unique_ptr<ChatTransport> make_http_transport(const HttpTransportConfig& config) {
    return std::make_unique<HttpChatTransport>(config);
}

AveragedJudgeScores judge_sample(const PromptLibrary& prompts, const std::string& image_ref,
                                 const std::string& ground_truth, const std::string& generated,
                                 DescriptionKind kind, ChatTransport& transport,
                                 const JudgeOptions& options) {
    AveragedJudgeScores result;
    std::array<long, kJudgeCriterionCount> sums = {};

    for (int variant = 0; variant < kPromptVariantCount; ++variant) {
        JudgeRequest req;
        req.image_ref = image_ref;
        req.ground_truth = ground_truth;
        req.generated = generated;
        req.kind = kind;
        req.variant = variant;
        const auto [system, user] = prompts.build_prompt(req);

        ChatRequest chat;
        chat.model = options.model;
        chat.temperature = options.temperature;
        chat.messages = {{"system", system}, {"user", user}};

        bool ok = false;
        for (int attempt = 0; attempt <= options.max_retries && !ok; ++attempt) {
            try {
                const JudgeScores scores = parse_judge_scores(transport.complete(chat));
                for (int i = 0; i < kJudgeCriterionCount; ++i) {
                    sums[i] += scores.values[i];
                }
                ++result.variants_used;
                ok = true;
            } catch (const std::exception&) {
                // retry; fall through to exclusion when attempts run out
            }
        }
        if (!ok) {
            result.failed_variants.push_back(variant);
        }
    }

    if (result.variants_used == 0) {
        throw Error("all prompt variants failed for image '" + image_ref + "'");
    }
    for (int i = 0; i < kJudgeCriterionCount; ++i) {
        result.values[i] = static_cast<double>(sums[i]) / result.variants_used;
    }
    return result;
}

}  // namespace patfig
