#include "selrag/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace selrag {

const char* to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::always: return "always";
        case PolicyKind::never: return "never";
        case PolicyKind::p_cc: return "p_cc";
        case PolicyKind::self_select: return "self_select";
        case PolicyKind::trial_retrieval: return "trial_retrieval";
        case PolicyKind::entropy: return "entropy";
        case PolicyKind::token_uncertainty: return "token_uncertainty";
    }
    return "p_cc";
}

PolicyKind policy_kind_from_string(const std::string& name) {
    if (name == "always") return PolicyKind::always;
    if (name == "never") return PolicyKind::never;
    if (name == "p_cc") return PolicyKind::p_cc;
    if (name == "self_select") return PolicyKind::self_select;
    if (name == "trial_retrieval") return PolicyKind::trial_retrieval;
    if (name == "entropy") return PolicyKind::entropy;
    if (name == "token_uncertainty") return PolicyKind::token_uncertainty;
    throw std::runtime_error("unknown policy: " + name);
}

namespace {

std::string decision_prompt_text(const CompletionTask& task, LmClient& lm,
                                 const PromptConfig& cfg) {
    const TokenCounter counter = [&lm](const std::string& s) { return lm.count_tokens(s); };
    const TruncatedParts parts =
        truncate_parts(task.left_context, task.right_context, "", cfg.budgets, counter,
                       cfg.comment_prefix);
    return build_decision_prompt(parts.left, parts.right, cfg.tokens).text;
}

std::string no_cc_prompt_text(const CompletionTask& task, LmClient& lm,
                              const PromptConfig& cfg) {
    const TokenCounter counter = [&lm](const std::string& s) { return lm.count_tokens(s); };
    const TruncatedParts parts =
        truncate_parts(task.left_context, task.right_context, "", cfg.budgets, counter,
                       cfg.comment_prefix);
    return build_fim_prompt(parts.left, parts.right, "", cfg.tokens).text;
}

}  // namespace

Decision decide_always() {
    Decision decision;
    decision.retrieve = true;
    decision.policy_name = "always";
    return decision;
}

Decision decide_never() {
    Decision decision;
    decision.retrieve = false;
    decision.policy_name = "never";
    return decision;
}

Decision decide_p_cc(const CompletionTask& task, LmClient& lm, const PromptConfig& prompt_cfg,
                     double threshold) {
    const std::string prompt = decision_prompt_text(task, lm, prompt_cfg);
    const auto probs = lm.next_token_probs({prompt, {prompt_cfg.tokens.cc}});
    const double p_cc = probs.at(prompt_cfg.tokens.cc);

    Decision decision;
    decision.policy_name = "p_cc";
    decision.score = p_cc;
    decision.threshold = threshold;
    decision.retrieve = p_cc > threshold;  // "exceeds": strictly greater
    return decision;
}

Decision decide_self_select(const CompletionTask& task, LmClient& lm,
                            const PromptConfig& prompt_cfg) {
    const std::string prompt = decision_prompt_text(task, lm, prompt_cfg);
    const auto probs =
        lm.next_token_probs({prompt, {prompt_cfg.tokens.cc, kOtherTokensMax}});
    const double p_cc = probs.at(prompt_cfg.tokens.cc);
    const double p_rest = probs.at(kOtherTokensMax);

    Decision decision;
    decision.policy_name = "self_select";
    decision.score = p_cc;
    decision.retrieve = p_cc > p_rest;  // ties abstain: strict argmax
    decision.aux = "max_other=" + std::to_string(p_rest);
    return decision;
}

Decision decide_trial_retrieval(const CompletionTask& task, const ChunkIndex& index,
                                const RetrieverConfig& retriever,
                                const PromptConfig& prompt_cfg, double threshold) {
    const std::string query = build_query(task, prompt_cfg.query_lines);
    CrossFileContext cc = retrieve_cc(index, task.current_file.value_or(""), query, retriever);

    Decision decision;
    decision.policy_name = "trial_retrieval";
    decision.threshold = threshold;
    const double top1 = cc.entries.empty() ? 0.0 : cc.entries.front().score;
    decision.score = top1;
    decision.retrieve = top1 >= threshold;
    if (!cc.entries.empty()) {
        decision.aux = "top1=" + cc.entries.front().chunk.file_path + ":" +
                       std::to_string(cc.entries.front().chunk.start_line);
    }
    // Hand the retrieved list to the pipeline; the trial already paid T_r.
    decision.cached_cc = std::make_shared<CrossFileContext>(std::move(cc));
    return decision;
}

Decision decide_entropy(const CompletionTask& task, LmClient& lm,
                        const PromptConfig& prompt_cfg, int samples, double threshold,
                        double temperature, std::uint64_t seed) {
    if (samples < 1) throw std::invalid_argument("entropy policy needs samples >= 1");
    const std::string prompt = no_cc_prompt_text(task, lm, prompt_cfg);

    double total_nll = 0.0;
    for (int s = 0; s < samples; ++s) {
        const Generation gen =
            lm.generate(prompt, prompt_cfg.max_tokens,
                        GenerationMode::sample_mode(temperature, seed + s), true);
        if (gen.token_logprobs.empty()) continue;  // empty sample contributes 0
        double nll = 0.0;
        for (const double lp : gen.token_logprobs) nll -= lp;
        total_nll += nll / static_cast<double>(gen.token_logprobs.size());
    }
    const double estimate = total_nll / static_cast<double>(samples);

    Decision decision;
    decision.policy_name = "entropy";
    decision.score = estimate;
    decision.threshold = threshold;
    decision.retrieve = estimate >= threshold;
    decision.aux = "samples=" + std::to_string(samples);
    return decision;
}

Decision decide_token_uncertainty(const CompletionTask& task, LmClient& lm,
                                  const PromptConfig& prompt_cfg, double threshold) {
    const std::string prompt = no_cc_prompt_text(task, lm, prompt_cfg);
    const Generation gen =
        lm.generate(prompt, prompt_cfg.max_tokens, GenerationMode::greedy_mode(), true);

    double min_prob = 1.0;  // empty output counts as maximally confident
    for (const double lp : gen.token_logprobs) min_prob = std::min(min_prob, std::exp(lp));

    Decision decision;
    decision.policy_name = "token_uncertainty";
    decision.score = min_prob;
    decision.threshold = threshold;
    decision.retrieve = min_prob <= threshold;
    return decision;
}

Decision decide(const PolicyConfig& policy, const CompletionTask& task, LmClient& lm,
                const ChunkIndex& index, const RetrieverConfig& retriever,
                const PromptConfig& prompt_cfg) {
    const auto threshold = [&]() -> double {
        if (!policy.threshold) {
            throw std::invalid_argument(std::string("policy ") + to_string(policy.kind) +
                                        " requires a threshold");
        }
        return *policy.threshold;
    };
    switch (policy.kind) {
        case PolicyKind::always: return decide_always();
        case PolicyKind::never: return decide_never();
        case PolicyKind::p_cc: return decide_p_cc(task, lm, prompt_cfg, threshold());
        case PolicyKind::self_select: return decide_self_select(task, lm, prompt_cfg);
        case PolicyKind::trial_retrieval:
            return decide_trial_retrieval(task, index, retriever, prompt_cfg, threshold());
        case PolicyKind::entropy:
            return decide_entropy(task, lm, prompt_cfg, policy.sample_count, threshold(),
                                  policy.temperature, policy.seed);
        case PolicyKind::token_uncertainty:
            return decide_token_uncertainty(task, lm, prompt_cfg, threshold());
    }
    throw std::logic_error("unhandled policy kind");
}

}  // namespace selrag
