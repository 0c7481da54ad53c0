#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selrag/lmclient.hpp"
#include "selrag/policy.hpp"
#include "selrag/prompting.hpp"
#include "selrag/retrieval.hpp"

namespace selrag {

/// Per-phase latency in seconds: decision, retrieval, generation. The
/// serving model assumes T_d < T_g < T_r + T_g.
struct LatencyProfile {
    double t_d = 0.0;
    double t_r = 0.0;
    double t_g = 0.0;
};

enum class RunMode { serve, eval };

const char* to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

struct CompletionOutcome {
    std::string task_id;
    Decision decision;
    std::optional<std::string> hyp_no_cc;
    std::optional<std::string> hyp_cc;
    std::string served;
    LatencyProfile latency;
    double system_latency = 0.0;  // T_g on abstention, T_r + T_g otherwise
    std::optional<CrossFileContext> cc_used;
    bool fell_back_to_no_cc = false;  // retriever failed after a retrieve verdict
    std::optional<std::string> error;
};

struct PipelineConfig {
    RunMode mode = RunMode::eval;
    PromptConfig prompt;
    PolicyConfig policy;
    RetrieverConfig retriever;
    /// When set, recorded latencies are these constants instead of wall-clock
    /// measurements (deterministic outputs for simulation and testing).
    std::optional<LatencyProfile> synthetic_latency;
    bool strict = false;
    int parallelism = 1;
};

/// One completion under a policy. SERVE computes only the branch the
/// decision selects; EVAL materializes both hypotheses for counterfactual
/// analysis. Decision-phase failures abstain; retrieval failures fall back
/// to the no-CC branch with the outcome marked.
CompletionOutcome complete_one(const CompletionTask& task, const ChunkIndex& index,
                               const PipelineConfig& cfg, LmClient& lm);

/// Outcomes in task order regardless of completion order. In lenient mode a
/// failing task yields an error record; strict mode rethrows the first error.
std::vector<CompletionOutcome> complete_batch(const std::vector<CompletionTask>& tasks,
                                              const ChunkIndex& index,
                                              const PipelineConfig& cfg, LmClient& lm);

std::string outcome_to_json_line(const CompletionOutcome& outcome);
CompletionOutcome outcome_from_json_line(const std::string& line);

void save_outcomes(const std::vector<CompletionOutcome>& outcomes, const std::string& path);
std::vector<CompletionOutcome> load_outcomes(const std::string& path);

}  // namespace selrag
