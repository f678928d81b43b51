#ifndef PATFIG_JUDGE_HPP
#define PATFIG_JUDGE_HPP

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace patfig {

inline constexpr int kJudgeCriterionCount = 6;
inline constexpr std::array<const char*, kJudgeCriterionCount> kJudgeCriteria = {
    "Relevance", "Accuracy", "Completeness", "Coherence", "Fluency", "Coverage"};

/// One grader response: integer 0 (worst) / 1 (reasonable) / 2 (perfect)
/// per criterion, in kJudgeCriteria order.
struct JudgeScores {
    std::array<int, kJudgeCriterionCount> values = {0, 0, 0, 0, 0, 0};

    int relevance() const { return values[0]; }
    int accuracy() const { return values[1]; }
    int completeness() const { return values[2]; }
    int coherence() const { return values[3]; }
    int fluency() const { return values[4]; }
    int coverage() const { return values[5]; }
};

/// Per-criterion mean over the prompt variants that produced a valid
/// response. Values lie in [0, 2]; with all five variants in, they are
/// multiples of 0.2.
struct AveragedJudgeScores {
    std::array<double, kJudgeCriterionCount> values = {0, 0, 0, 0, 0, 0};
    int variants_used = 0;
    std::vector<int> failed_variants;  // empty unless degraded

    bool degraded() const { return !failed_variants.empty(); }
};

enum class DescriptionKind { Brief, Detailed };

struct JudgeRequest {
    std::string image_ref;  // path or URL, passed through to the prompt
    std::string ground_truth;
    std::string generated;
    DescriptionKind kind = DescriptionKind::Brief;
    int variant = 0;  // in [0, 5)
};

inline constexpr int kPromptVariantCount = 5;

/// The five grader prompt texts, loaded from a directory holding
/// variant<i>.system.txt / variant<i>.user.txt pairs. User prompts carry the
/// #img_url#, #gt_desc#, #gen_desc# placeholders.
class PromptLibrary {
  public:
    static PromptLibrary load(const std::string& dir);

    /// System and user prompt for the request: placeholders substituted; for
    /// detailed descriptions every "brief" in the system prompt becomes
    /// "detailed". Unknown variant or empty texts throw.
    std::pair<std::string, std::string> build_prompt(const JudgeRequest& req) const;

  private:
    std::array<std::string, kPromptVariantCount> system_;
    std::array<std::string, kPromptVariantCount> user_;
};

/// Extract the six "Criterion: k" lines inside <results></results>.
/// Whitespace and case variations are accepted; a missing criterion, an
/// out-of-range value, or an absent tag raises an error that carries the
/// raw response for audit.
JudgeScores parse_judge_scores(const std::string& response_text);

/// Canonical score block; parse_judge_scores(format_score_block(s)) == s.
std::string format_score_block(const JudgeScores& scores);

struct ChatMessage {
    std::string role;  // "system" or "user"
    std::string content;
};

struct ChatRequest {
    std::string model;
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
};

/// Chat-completion backend. Implementations return the assistant message
/// text and throw on failure.
class ChatTransport {
  public:
    virtual ~ChatTransport() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// Test/replay backend driven by a handler function.
class ScriptedTransport : public ChatTransport {
  public:
    explicit ScriptedTransport(std::function<std::string(const ChatRequest&)> handler)
        : handler_(std::move(handler)) {}
    std::string complete(const ChatRequest& request) override { return handler_(request); }

  private:
    std::function<std::string(const ChatRequest&)> handler_;
};

struct HttpTransportConfig {
    std::string endpoint;  // http(s)://host[:port][/path]; default path
                           // /v1/chat/completions
    std::string model;
    std::string api_key_env = "PATFIG_JUDGE_API_KEY";
    int timeout_seconds = 60;
};

/// OpenAI-style chat-completion client over the configured endpoint. The
/// credential is read from the named environment variable at request time.
std::unique_ptr<ChatTransport> make_http_transport(const HttpTransportConfig& config);

struct JudgeOptions {
    std::string model;
    double temperature = 0.0;
    int max_retries = 2;  // extra attempts per variant after the first
};

/// Run all five prompt variants for one sample and average per criterion.
/// A variant that keeps failing after the retries is excluded and the
/// divisor reduced; the result is flagged via failed_variants. All five
/// failing raises an error naming the sample.
AveragedJudgeScores judge_sample(const PromptLibrary& prompts, const std::string& image_ref,
                                 const std::string& ground_truth, const std::string& generated,
                                 DescriptionKind kind, ChatTransport& transport,
                                 const JudgeOptions& options);

}  // namespace patfig

#endif
