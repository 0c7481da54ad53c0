#include "selrag/mock_lm.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace selrag {

namespace {

// Token spans under the fallback rule: maximal non-space runs and individual
// newline characters. end_offset is one past the span, so truncating the
// text at a span boundary keeps it consistent with the token list.
struct TokenSpan {
    std::string token;
    std::size_t end_offset;
};

std::vector<TokenSpan> token_spans(const std::string& text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            spans.push_back({"\n", i + 1});
            ++i;
            continue;
        }
        if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n' &&
               text[j] != '\r' && text[j] != '\f' && text[j] != '\v') {
            ++j;
        }
        spans.push_back({text.substr(i, j - i), j});
        i = j;
    }
    return spans;
}

std::string decode_escaped_newlines(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == 'n') {
            out += '\n';
            ++i;
        } else {
            out += text[i];
        }
    }
    return out;
}

std::map<std::string, double> parse_distribution(const json& table) {
    std::map<std::string, double> dist;
    for (const auto& [token, prob] : table.items()) dist[token] = prob.get<double>();
    return dist;
}

}  // namespace

MockScript MockScript::fixed(std::string text) {
    MockScript script;
    script.mode = Mode::fixed;
    script.fixed_text = std::move(text);
    return script;
}

MockScript MockScript::copy_from_cc(std::string fallback) {
    MockScript script;
    script.mode = Mode::copy_from_cc;
    script.fallback_text = std::move(fallback);
    return script;
}

MockScript MockScript::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read mock script: " + path);
    json spec;
    try {
        spec = json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error("mock script is not JSON: " + path + ": " + e.what());
    }

    MockScript script;
    const std::string mode = spec.value("mode", "fixed");
    if (mode == "fixed") {
        script.mode = Mode::fixed;
    } else if (mode == "table") {
        script.mode = Mode::table;
    } else if (mode == "copy_from_cc") {
        script.mode = Mode::copy_from_cc;
    } else {
        throw std::runtime_error("unknown mock mode: " + mode);
    }
    script.fixed_text = spec.value("text", "");
    script.fallback_text = spec.value("fallback", "pass");
    script.strict = spec.value("strict", false);
    script.logprob_per_token = spec.value("logprob_per_token", 0.0);
    if (spec.contains("table")) {
        for (const auto& [needle, text] : spec["table"].items()) {
            script.table.emplace_back(needle, text.get<std::string>());
        }
    }
    if (spec.contains("p_cc_default")) {
        script.next_token_default["<cc>"] = spec["p_cc_default"].get<double>();
    }
    if (spec.contains("next_token")) {
        const auto& nt = spec["next_token"];
        if (nt.contains("default")) {
            script.next_token_default = parse_distribution(nt["default"]);
        }
        if (nt.contains("by_contains")) {
            for (const auto& entry : nt["by_contains"]) {
                script.next_token_table.emplace_back(entry.at("needle").get<std::string>(),
                                                     parse_distribution(entry.at("dist")));
            }
        }
    }
    if (spec.contains("embeddings")) {
        for (const auto& [text, vec] : spec["embeddings"].items()) {
            script.embeddings[text] = vec.get<std::vector<double>>();
        }
    }
    return script;
}

MockLm::MockLm(MockScript script) : script_(std::move(script)) {}

std::string MockLm::resolve_text(const std::string& prompt) const {
    switch (script_.mode) {
        case MockScript::Mode::fixed:
            return script_.fixed_text;
        case MockScript::Mode::table: {
            for (const auto& [needle, text] : script_.table) {
                if (prompt.find(needle) != std::string::npos) return text;
            }
            if (script_.strict) {
                throw LmError("mock LM: no table entry matches the prompt");
            }
            return script_.fallback_text;
        }
        case MockScript::Mode::copy_from_cc: {
            const std::size_t at = prompt.find(kOracleSentinel);
            if (at == std::string::npos) return script_.fallback_text;
            const std::size_t start = at + std::string(kOracleSentinel).size();
            std::size_t end = prompt.find('\n', start);
            if (end == std::string::npos) end = prompt.size();
            std::string rest = prompt.substr(start, end - start);
            if (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
            return decode_escaped_newlines(rest);
        }
    }
    return script_.fallback_text;
}

Generation MockLm::generate(const std::string& prompt, int max_tokens,
                            const GenerationMode& mode, bool want_logprobs) {
    (void)want_logprobs;  // the mock always knows its logprobs
    record({LoggedRequest::Kind::generate, prompt, max_tokens, mode.greedy,
            mode.greedy ? std::nullopt : mode.sample.seed});

    if (hook_) {
        if (auto custom = hook_(prompt, max_tokens, mode)) return *custom;
    }

    const std::string text = resolve_text(prompt);
    auto spans = token_spans(text);

    Generation gen;
    if (static_cast<int>(spans.size()) > max_tokens) {
        spans.resize(max_tokens);
        gen.finish_reason = FinishReason::length;
        gen.text = spans.empty() ? std::string() : text.substr(0, spans.back().end_offset);
    } else {
        gen.finish_reason = FinishReason::stop;
        gen.text = text;
    }
    for (const auto& span : spans) gen.tokens.push_back(span.token);
    gen.token_logprobs.assign(gen.tokens.size(), script_.logprob_per_token);
    return gen;
}

std::map<std::string, double> MockLm::next_token_probs(const NextTokenQuery& query) {
    if (query.candidate_tokens.empty()) throw LmError("candidates must be non-empty");
    record({LoggedRequest::Kind::next_token, query.prompt_text, 0, true, std::nullopt});

    const std::map<std::string, double>* dist = &script_.next_token_default;
    for (const auto& [needle, table] : script_.next_token_table) {
        if (query.prompt_text.find(needle) != std::string::npos) {
            dist = &table;
            break;
        }
    }

    std::map<std::string, double> probs;
    for (const auto& candidate : query.candidate_tokens) {
        if (candidate == kOtherTokensMax) {
            double best = 0.0;
            for (const auto& [token, prob] : *dist) {
                if (std::find(query.candidate_tokens.begin(), query.candidate_tokens.end(),
                              token) == query.candidate_tokens.end()) {
                    best = std::max(best, prob);
                }
            }
            probs[candidate] = best;
        } else {
            const auto it = dist->find(candidate);
            probs[candidate] = it == dist->end() ? 0.0 : it->second;
        }
    }
    return probs;
}

int MockLm::count_tokens(const std::string& text) {
    return count_tokens_fallback(text);
}

std::vector<std::vector<double>> MockLm::embed(const std::vector<std::string>& texts) {
    record({LoggedRequest::Kind::embed, texts.empty() ? "" : texts.front(), 0, true,
            std::nullopt});
    std::vector<std::vector<double>> vectors;
    vectors.reserve(texts.size());
    for (const auto& text : texts) {
        const auto it = script_.embeddings.find(text);
        if (it != script_.embeddings.end()) {
            vectors.push_back(it->second);
            continue;
        }
        if (script_.strict) throw LmError("mock LM: no scripted embedding for text");
        // Deterministic 8-dim bag-of-character-sums stand-in.
        std::vector<double> v(8, 0.0);
        for (std::size_t i = 0; i < text.size(); ++i) {
            v[i % 8] += static_cast<unsigned char>(text[i]) / 255.0;
        }
        vectors.push_back(std::move(v));
    }
    return vectors;
}

std::vector<LoggedRequest> MockLm::request_log() const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_;
}

std::size_t MockLm::request_count() const {
    std::lock_guard<std::mutex> lock(log_mutex_);
    return log_.size();
}

void MockLm::record(LoggedRequest entry) {
    std::lock_guard<std::mutex> lock(log_mutex_);
    log_.push_back(std::move(entry));
}

}  // namespace selrag
