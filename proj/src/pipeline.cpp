#include "selrag/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

using ordered_json = nlohmann::ordered_json;

namespace selrag {

const char* to_string(RunMode mode) {
    return mode == RunMode::serve ? "serve" : "eval";
}

RunMode run_mode_from_string(const std::string& name) {
    if (name == "serve") return RunMode::serve;
    if (name == "eval") return RunMode::eval;
    throw std::runtime_error("unknown mode: " + name);
}

namespace {

class PhaseTimer {
public:
    PhaseTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

PromptConfig resolve_prompt(const PromptConfig& base, TaskKind kind, int index_chunk_lines) {
    PromptConfig resolved = base;
    if (resolved.query_lines <= 0) resolved.query_lines = index_chunk_lines;
    if (resolved.max_tokens <= 0) {
        resolved.max_tokens = kind == TaskKind::function ? 256 : 50;
    }
    return resolved;
}

}  // namespace

CompletionOutcome complete_one(const CompletionTask& task, const ChunkIndex& index,
                               const PipelineConfig& cfg, LmClient& lm) {
    CompletionOutcome outcome;
    outcome.task_id = task.task_id;

    const PromptConfig prompt_cfg = resolve_prompt(cfg.prompt, task.kind, index.chunk_lines);
    const TokenCounter counter = [&lm](const std::string& s) { return lm.count_tokens(s); };

    // P1: the retrieval decision. Failures abstain by default.
    {
        const PhaseTimer timer;
        try {
            outcome.decision =
                decide(cfg.policy, task, lm, index, cfg.retriever, prompt_cfg);
        } catch (const std::exception& e) {
            outcome.decision = decide_never();
            outcome.decision.policy_name = to_string(cfg.policy.kind);
            outcome.error = std::string("decision failed, abstaining: ") + e.what();
        }
        outcome.latency.t_d = timer.seconds();
    }

    const TruncatedParts plain = truncate_parts(task.left_context, task.right_context, "",
                                                prompt_cfg.budgets, counter,
                                                prompt_cfg.comment_prefix);

    const bool want_no_cc = cfg.mode == RunMode::eval || !outcome.decision.retrieve;
    const bool want_cc = cfg.mode == RunMode::eval || outcome.decision.retrieve;

    // P2: generation without cross-file context.
    double t_g_no_cc = 0.0;
    if (want_no_cc) {
        const PromptBundle prompt = build_fim_prompt(plain.left, plain.right, "", prompt_cfg.tokens);
        const PhaseTimer timer;
        outcome.hyp_no_cc =
            lm.generate(prompt.text, prompt_cfg.max_tokens, GenerationMode::greedy_mode(), true)
                .text;
        t_g_no_cc = timer.seconds();
    }

    // P3: retrieval plus augmented generation.
    double t_g_cc = 0.0;
    if (want_cc) {
        bool retrieved = false;
        CrossFileContext cc;
        {
            const PhaseTimer timer;
            try {
                if (outcome.decision.cached_cc) {
                    cc = *outcome.decision.cached_cc;
                } else {
                    const std::string query = build_query(task, prompt_cfg.query_lines);
                    cc = retrieve_cc(index, task.current_file.value_or(""), query,
                                     cfg.retriever);
                }
                retrieved = true;
            } catch (const std::exception& e) {
                outcome.fell_back_to_no_cc = true;
                outcome.error = std::string("retrieval failed, serving no-CC branch: ") +
                                e.what();
            }
            outcome.latency.t_r = timer.seconds();
        }

        if (retrieved) {
            const std::string cc_text = verbalize_cc(cc, prompt_cfg.comment_prefix);
            const TruncatedParts parts =
                truncate_parts(task.left_context, task.right_context, cc_text,
                               prompt_cfg.budgets, counter, prompt_cfg.comment_prefix);
            const PromptBundle prompt =
                build_fim_prompt(parts.left, parts.right, parts.cc, prompt_cfg.tokens);
            const PhaseTimer timer;
            outcome.hyp_cc =
                lm.generate(prompt.text, prompt_cfg.max_tokens, GenerationMode::greedy_mode(),
                            true)
                    .text;
            t_g_cc = timer.seconds();
            outcome.cc_used = std::move(cc);
        } else if (!outcome.hyp_no_cc) {
            // SERVE-mode retrieval failure: materialize the fallback branch.
            const PromptBundle prompt =
                build_fim_prompt(plain.left, plain.right, "", prompt_cfg.tokens);
            const PhaseTimer timer;
            outcome.hyp_no_cc =
                lm.generate(prompt.text, prompt_cfg.max_tokens, GenerationMode::greedy_mode(),
                            true)
                    .text;
            t_g_no_cc = timer.seconds();
        }
    }

    const bool serve_cc = outcome.decision.retrieve && outcome.hyp_cc.has_value();
    outcome.served = serve_cc ? *outcome.hyp_cc : outcome.hyp_no_cc.value_or("");
    outcome.latency.t_g = serve_cc ? t_g_cc : t_g_no_cc;

    if (cfg.synthetic_latency) {
        outcome.latency = *cfg.synthetic_latency;
    }
    // Abstaining in SERVE mode never touches the retriever, so no T_r charge.
    if (cfg.mode == RunMode::serve && !outcome.decision.retrieve) {
        outcome.latency.t_r = 0.0;
    }
    outcome.system_latency = outcome.decision.retrieve
                                 ? outcome.latency.t_r + outcome.latency.t_g
                                 : outcome.latency.t_g;
    return outcome;
}

std::vector<CompletionOutcome> complete_batch(const std::vector<CompletionTask>& tasks,
                                              const ChunkIndex& index,
                                              const PipelineConfig& cfg, LmClient& lm) {
    std::vector<CompletionOutcome> outcomes(tasks.size());
    std::vector<std::string> errors(tasks.size());
    std::atomic<std::size_t> next{0};

    const int workers = std::max(1, cfg.parallelism);
    auto run = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            try {
                outcomes[i] = complete_one(tasks[i], index, cfg, lm);
            } catch (const std::exception& e) {
                CompletionOutcome failed;
                failed.task_id = tasks[i].task_id;
                failed.decision = decide_never();
                failed.error = e.what();
                outcomes[i] = std::move(failed);
                errors[i] = e.what();
            }
        }
    };

    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(run);
        for (auto& thread : pool) thread.join();
    }

    if (cfg.strict) {
        for (std::size_t i = 0; i < errors.size(); ++i) {
            if (!errors[i].empty()) {
                throw std::runtime_error("task " + tasks[i].task_id + " failed: " + errors[i]);
            }
        }
    }
    return outcomes;
}

std::string outcome_to_json_line(const CompletionOutcome& outcome) {
    ordered_json record;
    record["task_id"] = outcome.task_id;
    record["retrieve"] = outcome.decision.retrieve;
    if (outcome.decision.score) {
        record["score"] = *outcome.decision.score;
    } else {
        record["score"] = nullptr;
    }
    record["served"] = outcome.served;
    if (outcome.hyp_no_cc) {
        record["hyp_no_cc"] = *outcome.hyp_no_cc;
    } else {
        record["hyp_no_cc"] = nullptr;
    }
    if (outcome.hyp_cc) {
        record["hyp_cc"] = *outcome.hyp_cc;
    } else {
        record["hyp_cc"] = nullptr;
    }
    record["t_d"] = outcome.latency.t_d;
    record["t_r"] = outcome.latency.t_r;
    record["t_g"] = outcome.latency.t_g;
    if (outcome.fell_back_to_no_cc) record["fallback"] = true;
    if (outcome.error) record["error"] = *outcome.error;
    return record.dump();
}

CompletionOutcome outcome_from_json_line(const std::string& line) {
    const ordered_json record = ordered_json::parse(line);
    CompletionOutcome outcome;
    outcome.task_id = record.at("task_id").get<std::string>();
    outcome.decision.retrieve = record.at("retrieve").get<bool>();
    if (!record.at("score").is_null()) {
        outcome.decision.score = record["score"].get<double>();
    }
    outcome.served = record.at("served").get<std::string>();
    if (!record.at("hyp_no_cc").is_null()) {
        outcome.hyp_no_cc = record["hyp_no_cc"].get<std::string>();
    }
    if (!record.at("hyp_cc").is_null()) {
        outcome.hyp_cc = record["hyp_cc"].get<std::string>();
    }
    outcome.latency.t_d = record.at("t_d").get<double>();
    outcome.latency.t_r = record.at("t_r").get<double>();
    outcome.latency.t_g = record.at("t_g").get<double>();
    outcome.system_latency = outcome.decision.retrieve
                                 ? outcome.latency.t_r + outcome.latency.t_g
                                 : outcome.latency.t_g;
    if (record.contains("fallback")) outcome.fell_back_to_no_cc = record["fallback"].get<bool>();
    if (record.contains("error")) outcome.error = record["error"].get<std::string>();
    return outcome;
}

void save_outcomes(const std::vector<CompletionOutcome>& outcomes, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write outcomes file: " + path);
    for (const auto& outcome : outcomes) out << outcome_to_json_line(outcome) << '\n';
}

std::vector<CompletionOutcome> load_outcomes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read outcomes file: " + path);
    std::vector<CompletionOutcome> outcomes;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) outcomes.push_back(outcome_from_json_line(line));
    }
    return outcomes;
}

}  // namespace selrag
