#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selrag/corpus.hpp"
#include "selrag/pipeline.hpp"

namespace selrag {

/// Levenshtein distance over characters (unit insert/delete/substitute).
std::size_t levenshtein(const std::string& a, const std::string& b);

/// 1 - Lev(hyp, ref) / max(|hyp|, |ref|); 1.0 when both are empty.
double edit_similarity(const std::string& hyp, const std::string& ref);

/// Equality after per-line trailing-whitespace strip and trailing-blank-line
/// strip; `strict` compares raw bytes.
bool exact_match(const std::string& hyp, const std::string& ref, bool strict = false);

/// First n_lines lines of raw (a trailing partial line counts as a line);
/// raw is returned unchanged when it has no more than n_lines lines.
std::string postprocess_lines(const std::string& raw, int n_lines);

/// Body of the function completed by raw, extracted from left_context + raw.
/// Returns raw unmodified when extraction fails.
std::string postprocess_function(const std::string& raw, const CompletionTask& task,
                                 const FunctionExtractor& extractor = {});

/// LF-split line count with one trailing empty segment dropped.
int line_count(const std::string& text);

struct InstanceScore {
    std::string task_id;
    bool em = false;
    double es = 0.0;
    bool retrieved = false;
};

struct EvalReport {
    std::vector<InstanceScore> instances;
    double em_pct = 0.0;
    double es_x100 = 0.0;
    double rag_pct = 0.0;
    std::string policy_name;
};

struct EvalOptions {
    bool strict_em = false;
    FunctionExtractor extractor;
};

/// Kind-appropriate post-processing, then EM/ES per instance and aggregates.
EvalReport evaluate_run(const std::vector<CompletionOutcome>& outcomes,
                        const std::vector<CompletionTask>& tasks,
                        const EvalOptions& options = {});

struct AbstentionBuckets {
    int correct_without = 0;       // no-CC output already correct
    int wrong_unimprovable = 0;    // wrong, and CC would not have helped
    int retrieval_would_help = 0;  // CC branch strictly improves ES
    double precision = 0.0;        // (b1 + b2) / abstained
};

/// Buckets the abstained instances of an EVAL-mode run. Throws when an
/// abstained outcome lacks the counterfactual CC hypothesis (SERVE input).
AbstentionBuckets abstention_analysis(const std::vector<CompletionOutcome>& outcomes,
                                      const std::vector<CompletionTask>& tasks,
                                      const EvalOptions& options = {});

struct CalibrationBin {
    double lo = 0.0;
    double hi = 0.0;
    double mean_score = 0.0;
    double improve_rate = 0.0;
    int count = 0;
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double ece = 0.0;
    int n = 0;
};

/// Equal-width bins of the decision score against the empirical rate of
/// ES(cc) > ES(no_cc); ECE is the count-weighted mean absolute gap over
/// non-empty bins.
CalibrationReport calibration(const std::vector<CompletionOutcome>& outcomes,
                              const std::vector<CompletionTask>& tasks, int bins = 10,
                              const EvalOptions& options = {});

struct LatencySummary {
    double mean_selective = 0.0;
    double mean_invariable = 0.0;
    double speedup = 0.0;  // 1 - selective/invariable = f * (1 - p)
    double rag_rate = 0.0;
    bool decision_slower_than_generation = false;  // T_d >= T_g warning
};

/// Closed-form selective-serving latency: abstain costs T_g, retrieval costs
/// T_r + T_g. When T_d >= T_g the abstain cost becomes max(T_d, T_g) and the
/// warning flag is set. Throws on negative latencies.
LatencySummary simulate_latency(double rag_rate, const LatencyProfile& profile);
LatencySummary simulate_latency(const std::vector<bool>& decisions,
                                const LatencyProfile& profile);
/// Retrieval-fraction form: f = T_r / (T_r + T_g); speedup = f * (1 - p).
LatencySummary simulate_latency_fraction(double f, double rag_rate);
/// Per-instance measured latencies (requires EVAL-mode outcomes).
LatencySummary simulate_latency(const std::vector<CompletionOutcome>& outcomes);

struct SweepPoint {
    double threshold = 0.0;
    double es_x100 = 0.0;
    double rag_pct = 0.0;
    double speedup = 0.0;
};

/// Accuracy-latency curve: re-decides each scored EVAL outcome at every
/// threshold and reports served-mix ES, %RAG, and closed-form speedup.
std::vector<SweepPoint> sweep_thresholds(const std::vector<CompletionOutcome>& outcomes,
                                         const std::vector<CompletionTask>& tasks,
                                         double retrieval_fraction,
                                         const std::vector<double>& thresholds,
                                         const EvalOptions& options = {});

}  // namespace selrag
