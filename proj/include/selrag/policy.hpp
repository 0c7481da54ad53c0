#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "selrag/lmclient.hpp"
#include "selrag/prompting.hpp"
#include "selrag/retrieval.hpp"

namespace selrag {

enum class PolicyKind {
    always,
    never,
    p_cc,
    self_select,
    trial_retrieval,
    entropy,
    token_uncertainty,
};

const char* to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct Decision {
    bool retrieve = false;
    std::string policy_name;
    std::optional<double> score;      // the quantity compared to the threshold
    std::optional<double> threshold;
    std::string aux;                  // diagnostics (sample count, top-1 path, ...)
    std::shared_ptr<CrossFileContext> cached_cc;  // trial retrieval reuse
};

struct PolicyConfig {
    PolicyKind kind = PolicyKind::p_cc;
    std::optional<double> threshold;  // kind-default when unset (0.2 / 0.15)
    int sample_count = 20;            // entropy
    double temperature = 1.0;         // entropy sampling
    std::uint64_t seed = 0;
};

Decision decide_always();
Decision decide_never();

/// retrieve iff P(cc | decision prompt) strictly exceeds T.
Decision decide_p_cc(const CompletionTask& task, LmClient& lm,
                     const PromptConfig& prompt_cfg, double threshold);

/// retrieve iff cc is the strict argmax next token after eof.
Decision decide_self_select(const CompletionTask& task, LmClient& lm,
                            const PromptConfig& prompt_cfg);

/// retrieve iff the top-1 retrieval similarity is >= T. The retrieved list
/// is cached on the Decision so the pipeline does not retrieve twice (the
/// trial costs full retrieval latency either way).
Decision decide_trial_retrieval(const CompletionTask& task, const ChunkIndex& index,
                                const RetrieverConfig& retriever,
                                const PromptConfig& prompt_cfg, double threshold);

/// Length-normalized mean negative log-likelihood over N sampled
/// completions of the no-CC prompt; retrieve iff the estimate is >= T.
Decision decide_entropy(const CompletionTask& task, LmClient& lm,
                        const PromptConfig& prompt_cfg, int samples, double threshold,
                        double temperature, std::uint64_t seed);

/// min over greedy tokens of exp(logprob); retrieve iff that is <= T.
/// An empty greedy output scores 1.0 (maximally confident).
Decision decide_token_uncertainty(const CompletionTask& task, LmClient& lm,
                                  const PromptConfig& prompt_cfg, double threshold);

/// Dispatch on PolicyConfig. Thresholded kinds require `threshold` (the CLI
/// resolves task-kind defaults before calling).
Decision decide(const PolicyConfig& policy, const CompletionTask& task, LmClient& lm,
                const ChunkIndex& index, const RetrieverConfig& retriever,
                const PromptConfig& prompt_cfg);

}  // namespace selrag
