#include "selrag/lmclient.hpp"

#include <cstdlib>
#include <iostream>

#include <httplib.h>
#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace selrag {

int count_tokens_fallback(const std::string& text) {
    int count = 0;
    bool in_run = false;
    for (const char c : text) {
        if (c == '\n') ++count;
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
                           c == '\v';
        if (!space && !in_run) ++count;
        in_run = !space;
    }
    return count;
}

std::vector<std::string> fallback_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < text.size()) {
        if (text[i] == '\n') {
            tokens.emplace_back("\n");
            ++i;
        } else if (is_space(text[i])) {
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && !is_space(text[j])) ++j;
            tokens.emplace_back(text.substr(i, j - i));
            i = j;
        }
    }
    return tokens;
}

struct HttpLmClient::Impl {
    HttpLmOptions options;
    httplib::Client client;

    explicit Impl(HttpLmOptions opts)
        : options(std::move(opts)), client(options.endpoint.c_str()) {
        client.set_connection_timeout(0, options.timeout_ms * 1000LL);
        client.set_read_timeout(options.timeout_ms / 1000, (options.timeout_ms % 1000) * 1000);
        client.set_write_timeout(options.timeout_ms / 1000, (options.timeout_ms % 1000) * 1000);
    }

    // One retry on transport failures; service-level errors are not retried.
    json post(const std::string& route, const json& body) {
        const std::string payload = body.dump();
        for (int attempt = 0; attempt < 2; ++attempt) {
            auto res = client.Post(route.c_str(), payload, "application/json");
            if (!res) {
                if (attempt == 0) continue;
                throw LmError("LM transport failure on " + route + ": " +
                              httplib::to_string(res.error()));
            }
            if (res->status != 200) {
                throw LmError("LM service error on " + route + ": HTTP " +
                              std::to_string(res->status) + " " + res->body);
            }
            try {
                return json::parse(res->body);
            } catch (const json::exception& e) {
                throw LmError("LM response is not JSON on " + route + ": " + e.what());
            }
        }
        throw LmError("unreachable");
    }
};

HttpLmClient::HttpLmClient(HttpLmOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpLmClient::~HttpLmClient() = default;

std::unique_ptr<HttpLmClient> HttpLmClient::from_env() {
    HttpLmOptions options;
    const char* endpoint = std::getenv("SELRAG_LM_ENDPOINT");
    if (!endpoint || !*endpoint) {
        throw LmError("SELRAG_LM_ENDPOINT is not set");
    }
    options.endpoint = endpoint;
    if (const char* timeout = std::getenv("SELRAG_LM_TIMEOUT_MS")) {
        options.timeout_ms = std::atoi(timeout);
    }
    return std::make_unique<HttpLmClient>(std::move(options));
}

Generation HttpLmClient::generate(const std::string& prompt, int max_tokens,
                                  const GenerationMode& mode, bool want_logprobs) {
    if (max_tokens < 1) throw LmError("max_tokens must be >= 1");
    json body;
    body["prompt"] = prompt;
    body["max_tokens"] = max_tokens;
    body["temperature"] = mode.greedy ? 0.0 : mode.sample.temperature;
    if (!mode.greedy && mode.sample.seed) {
        body["seed"] = *mode.sample.seed;
    } else {
        body["seed"] = nullptr;
    }
    body["logprobs"] = want_logprobs;
    body["stop"] = impl_->options.stop;

    const json reply = impl_->post("/complete", body);
    Generation gen;
    gen.text = reply.at("text").get<std::string>();
    if (reply.contains("tokens") && !reply["tokens"].is_null()) {
        gen.tokens = reply["tokens"].get<std::vector<std::string>>();
    }
    if (reply.contains("token_logprobs") && !reply["token_logprobs"].is_null()) {
        gen.token_logprobs = reply["token_logprobs"].get<std::vector<double>>();
    }
    if (gen.tokens.size() != gen.token_logprobs.size()) {
        throw LmError("LM reply has misaligned tokens/logprobs");
    }
    gen.finish_reason = reply.value("finish_reason", "stop") == "length" ? FinishReason::length
                                                                         : FinishReason::stop;
    return gen;
}

std::map<std::string, double> HttpLmClient::next_token_probs(const NextTokenQuery& query) {
    if (query.candidate_tokens.empty()) throw LmError("candidates must be non-empty");
    json body;
    body["prompt"] = query.prompt_text;
    body["candidates"] = query.candidate_tokens;
    const json reply = impl_->post("/next_token", body);

    std::map<std::string, double> probs;
    const auto& table = reply.at("probs");
    for (const auto& candidate : query.candidate_tokens) {
        if (table.contains(candidate)) {
            probs[candidate] = table[candidate].get<double>();
        } else {
            std::cerr << "selrag: candidate token not in service vocabulary: " << candidate
                      << "\n";
            probs[candidate] = 0.0;
        }
    }
    return probs;
}

int HttpLmClient::count_tokens(const std::string& text) {
    try {
        json body;
        body["text"] = text;
        return impl_->post("/tokenize", body).at("count").get<int>();
    } catch (const LmError&) {
        return count_tokens_fallback(text);
    }
}

std::vector<std::vector<double>> HttpLmClient::embed(const std::vector<std::string>& texts) {
    json body;
    body["texts"] = texts;
    const json reply = impl_->post("/embed", body);
    return reply.at("vectors").get<std::vector<std::vector<double>>>();
}

}  // namespace selrag
