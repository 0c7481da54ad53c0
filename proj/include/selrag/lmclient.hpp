#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace selrag {

struct LmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FinishReason { stop, length };

struct Generation {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<double> token_logprobs;  // natural log, <= 0
    FinishReason finish_reason = FinishReason::stop;
};

struct SampleParams {
    double temperature = 1.0;
    std::optional<std::uint64_t> seed;
};

struct GenerationMode {
    bool greedy = true;
    SampleParams sample;

    static GenerationMode greedy_mode() { return {}; }
    static GenerationMode sample_mode(double temperature, std::uint64_t seed) {
        return {false, {temperature, seed}};
    }
};

/// Next-token probability query. The reserved candidate "*" asks for the
/// maximum probability over all tokens NOT listed as candidates, which is
/// what strict-argmax self-selection needs.
struct NextTokenQuery {
    std::string prompt_text;
    std::vector<std::string> candidate_tokens;
};

inline constexpr const char* kOtherTokensMax = "*";

/// Number of maximal runs of non-space characters plus the number of
/// newline characters. The documented budget counter when no service
/// tokenizer is available.
int count_tokens_fallback(const std::string& text);

/// The token strings behind count_tokens_fallback: non-space runs plus one
/// "\n" token per newline, in order.
std::vector<std::string> fallback_tokens(const std::string& text);

/// Boundary to the generation model. Implementations must be safe for
/// concurrent requests.
class LmClient {
public:
    virtual ~LmClient() = default;

    virtual Generation generate(const std::string& prompt, int max_tokens,
                                const GenerationMode& mode, bool want_logprobs) = 0;

    /// Probabilities in [0,1]; candidates the service cannot resolve are
    /// reported as 0.
    virtual std::map<std::string, double> next_token_probs(const NextTokenQuery& query) = 0;

    virtual int count_tokens(const std::string& text) = 0;

    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

struct HttpLmOptions {
    std::string endpoint;       // e.g. http://127.0.0.1:8080
    int timeout_ms = 30000;
    std::vector<std::string> stop;
};

/// Minimal completion-API client over POST /complete, /next_token,
/// /tokenize, /embed. Retries once on transport errors. Reads
/// SELRAG_LM_ENDPOINT / SELRAG_LM_TIMEOUT_MS when constructed from_env.
class HttpLmClient : public LmClient {
public:
    explicit HttpLmClient(HttpLmOptions options);
    ~HttpLmClient() override;

    static std::unique_ptr<HttpLmClient> from_env();

    Generation generate(const std::string& prompt, int max_tokens,
                        const GenerationMode& mode, bool want_logprobs) override;
    std::map<std::string, double> next_token_probs(const NextTokenQuery& query) override;
    int count_tokens(const std::string& text) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace selrag
