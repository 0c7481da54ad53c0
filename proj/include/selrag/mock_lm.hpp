#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "selrag/lmclient.hpp"

namespace selrag {

/// Scripted, fully deterministic LM double for tests and offline runs.
///
/// Generation modes:
///  - fixed: every prompt yields `fixed_text`.
///  - table: the first entry whose needle is contained in the prompt wins;
///    otherwise `fallback_text` (or an error in strict mode).
///  - copy_from_cc: if the prompt contains a line with the sentinel
///    "##ORACLE:", the remainder of that line is emitted (one leading space
///    stripped, the two-byte sequence "\n" decoded as a newline so multi-line
///    targets can be planted); otherwise `fallback_text`.
///
/// Next-token queries consult a full (small) distribution per matching
/// needle, falling back to `next_token_default`. The reserved candidate "*"
/// resolves to the highest probability among tokens not listed as candidates.
struct MockScript {
    enum class Mode { fixed, table, copy_from_cc };

    Mode mode = Mode::fixed;
    std::string fixed_text;
    std::string fallback_text = "pass";
    std::vector<std::pair<std::string, std::string>> table;  // needle -> text
    bool strict = false;

    double logprob_per_token = 0.0;  // natural log, applied to every token
    std::map<std::string, double> next_token_default;
    std::vector<std::pair<std::string, std::map<std::string, double>>> next_token_table;

    std::map<std::string, std::vector<double>> embeddings;  // text -> vector

    static MockScript fixed(std::string text);
    static MockScript copy_from_cc(std::string fallback = "pass");
    static MockScript from_json_file(const std::string& path);
};

inline constexpr const char* kOracleSentinel = "##ORACLE:";

struct LoggedRequest {
    enum class Kind { generate, next_token, tokenize, embed };
    Kind kind;
    std::string prompt;
    int max_tokens = 0;
    bool greedy = true;
    std::optional<std::uint64_t> seed;
};

class MockLm : public LmClient {
public:
    explicit MockLm(MockScript script);

    Generation generate(const std::string& prompt, int max_tokens,
                        const GenerationMode& mode, bool want_logprobs) override;
    std::map<std::string, double> next_token_probs(const NextTokenQuery& query) override;
    int count_tokens(const std::string& text) override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;

    /// Full-control hook tried before the declarative script; return nullopt
    /// to fall through.
    using GenerateHook = std::function<std::optional<Generation>(
        const std::string& prompt, int max_tokens, const GenerationMode& mode)>;
    void set_generate_hook(GenerateHook hook) { hook_ = std::move(hook); }

    std::vector<LoggedRequest> request_log() const;
    std::size_t request_count() const;

private:
    MockScript script_;
    GenerateHook hook_;
    mutable std::mutex log_mutex_;
    std::vector<LoggedRequest> log_;

    std::string resolve_text(const std::string& prompt) const;
    void record(LoggedRequest entry);
};

}  // namespace selrag
