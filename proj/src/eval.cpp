#include "selrag/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace selrag {

std::size_t levenshtein(const std::string& a, const std::string& b) {
    const std::size_t m = a.size(), n = b.size();
    if (m == 0) return n;
    if (n == 0) return m;

    std::vector<std::size_t> prev(n + 1), curr(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= m; ++i) {
        curr[0] = i;
        for (std::size_t j = 1; j <= n; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
        }
        std::swap(prev, curr);
    }
    return prev[n];
}

double edit_similarity(const std::string& hyp, const std::string& ref) {
    if (hyp.empty() && ref.empty()) return 1.0;
    const double maxlen = static_cast<double>(std::max(hyp.size(), ref.size()));
    return 1.0 - static_cast<double>(levenshtein(hyp, ref)) / maxlen;
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) {
            if (start < text.size()) lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string normalize_for_em(const std::string& text) {
    std::vector<std::string> lines = split_lines(text);
    for (auto& line : lines) {
        while (!line.empty() &&
               (line.back() == ' ' || line.back() == '\t' || line.back() == '\r')) {
            line.pop_back();
        }
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out += '\n';
        out += lines[i];
    }
    return out;
}

}  // namespace

bool exact_match(const std::string& hyp, const std::string& ref, bool strict) {
    if (strict) return hyp == ref;
    return normalize_for_em(hyp) == normalize_for_em(ref);
}

int line_count(const std::string& text) {
    if (text.empty()) return 0;
    int count = 0;
    for (const char c : text) {
        if (c == '\n') ++count;
    }
    if (text.back() != '\n') ++count;
    return count;
}

std::string postprocess_lines(const std::string& raw, int n_lines) {
    if (n_lines < 1) throw std::invalid_argument("n_lines must be >= 1");
    if (line_count(raw) <= n_lines) return raw;
    std::size_t pos = 0;
    for (int seen = 0; seen < n_lines; ++seen) {
        pos = raw.find('\n', pos) + 1;
    }
    return raw.substr(0, pos - 1);  // drop the terminating newline
}

std::string postprocess_function(const std::string& raw, const CompletionTask& task,
                                 const FunctionExtractor& extractor) {
    const std::string& left = task.left_context;
    const std::string merged = left + raw;

    SourceFile file;
    file.path = task.current_file.value_or("<completion>");
    file.lines = split_lines(merged);
    file.trailing_newline = !merged.empty() && merged.back() == '\n';

    // The function under completion is the last def whose signature sits in
    // the left context.
    const int left_line_count = line_count(left);
    std::vector<FunctionSpan> spans;
    try {
        spans = extract_functions(file, extractor);
    } catch (const std::exception&) {
        return raw;
    }
    const FunctionSpan* target = nullptr;
    for (const auto& span : spans) {
        if (span.signature_line < left_line_count) target = &span;
    }
    if (!target || target->body_line_count() <= 0) return raw;

    // Character span of the body inside merged, clipped to the generated part.
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i + 1 < merged.size(); ++i) {
        if (merged[i] == '\n') starts.push_back(i + 1);
    }
    if (target->body_start_line >= static_cast<int>(starts.size())) return raw;
    std::size_t begin = starts[target->body_start_line];
    std::size_t end = target->body_end_line < static_cast<int>(starts.size())
                          ? starts[target->body_end_line]
                          : merged.size();
    begin = std::max(begin, left.size());
    if (begin >= end) return raw;
    return merged.substr(begin, end - begin);
}

namespace {

std::unordered_map<std::string, const CompletionTask*> task_table(
    const std::vector<CompletionTask>& tasks) {
    std::unordered_map<std::string, const CompletionTask*> table;
    for (const auto& task : tasks) table[task.task_id] = &task;
    return table;
}

std::string postprocess_for(const std::string& raw, const CompletionTask& task,
                            const EvalOptions& options) {
    if (task.kind == TaskKind::function) {
        return postprocess_function(raw, task, options.extractor);
    }
    const int n = std::max(1, line_count(task.groundtruth));
    return postprocess_lines(raw, n);
}

const CompletionTask& task_for(const std::unordered_map<std::string, const CompletionTask*>& table,
                               const std::string& task_id) {
    const auto it = table.find(task_id);
    if (it == table.end()) {
        throw std::runtime_error("outcome references unknown task: " + task_id);
    }
    return *it->second;
}

}  // namespace

EvalReport evaluate_run(const std::vector<CompletionOutcome>& outcomes,
                        const std::vector<CompletionTask>& tasks, const EvalOptions& options) {
    const auto table = task_table(tasks);

    EvalReport report;
    double es_sum = 0.0;
    int em_count = 0, rag_count = 0;
    for (const auto& outcome : outcomes) {
        const CompletionTask& task = task_for(table, outcome.task_id);
        const std::string hyp = postprocess_for(outcome.served, task, options);

        InstanceScore score;
        score.task_id = outcome.task_id;
        score.em = exact_match(hyp, task.groundtruth, options.strict_em);
        score.es = edit_similarity(hyp, task.groundtruth);
        score.retrieved = outcome.decision.retrieve;
        es_sum += score.es;
        if (score.em) ++em_count;
        if (score.retrieved) ++rag_count;
        report.instances.push_back(std::move(score));
    }
    const double n = static_cast<double>(outcomes.size());
    if (n > 0) {
        report.em_pct = 100.0 * em_count / n;
        report.es_x100 = 100.0 * es_sum / n;
        report.rag_pct = 100.0 * rag_count / n;
    }
    return report;
}

namespace {

struct CounterfactualPair {
    double es_no_cc = 0.0;
    double es_cc = 0.0;
    bool em_no_cc = false;
};

CounterfactualPair score_both(const CompletionOutcome& outcome, const CompletionTask& task,
                              const EvalOptions& options, const char* caller) {
    if (!outcome.hyp_no_cc || !outcome.hyp_cc) {
        throw std::runtime_error(std::string(caller) +
                                 " requires EVAL-mode outcomes with both hypotheses (task " +
                                 outcome.task_id + ")");
    }
    CounterfactualPair pair;
    const std::string no_cc = postprocess_for(*outcome.hyp_no_cc, task, options);
    const std::string cc = postprocess_for(*outcome.hyp_cc, task, options);
    pair.es_no_cc = edit_similarity(no_cc, task.groundtruth);
    pair.es_cc = edit_similarity(cc, task.groundtruth);
    pair.em_no_cc = exact_match(no_cc, task.groundtruth, options.strict_em);
    return pair;
}

}  // namespace

AbstentionBuckets abstention_analysis(const std::vector<CompletionOutcome>& outcomes,
                                      const std::vector<CompletionTask>& tasks,
                                      const EvalOptions& options) {
    const auto table = task_table(tasks);

    AbstentionBuckets buckets;
    int abstained = 0;
    for (const auto& outcome : outcomes) {
        if (outcome.decision.retrieve) continue;
        ++abstained;
        const CompletionTask& task = task_for(table, outcome.task_id);
        const CounterfactualPair pair = score_both(outcome, task, options, "abstention_analysis");
        if (pair.em_no_cc || pair.es_no_cc == 1.0) {
            ++buckets.correct_without;
        } else if (pair.es_cc > pair.es_no_cc) {
            ++buckets.retrieval_would_help;
        } else {
            ++buckets.wrong_unimprovable;
        }
    }
    if (abstained > 0) {
        buckets.precision =
            static_cast<double>(buckets.correct_without + buckets.wrong_unimprovable) /
            static_cast<double>(abstained);
    }
    return buckets;
}

CalibrationReport calibration(const std::vector<CompletionOutcome>& outcomes,
                              const std::vector<CompletionTask>& tasks, int bins,
                              const EvalOptions& options) {
    if (bins < 1) throw std::invalid_argument("calibration needs bins >= 1");
    const auto table = task_table(tasks);

    CalibrationReport report;
    report.bins.resize(bins);
    for (int b = 0; b < bins; ++b) {
        report.bins[b].lo = static_cast<double>(b) / bins;
        report.bins[b].hi = static_cast<double>(b + 1) / bins;
    }

    std::vector<double> score_sum(bins, 0.0);
    std::vector<int> improved(bins, 0);
    for (const auto& outcome : outcomes) {
        if (!outcome.decision.score) continue;
        const double score = *outcome.decision.score;
        const CompletionTask& task = task_for(table, outcome.task_id);
        const CounterfactualPair pair = score_both(outcome, task, options, "calibration");
        const int b = std::min(bins - 1, std::max(0, static_cast<int>(score * bins)));
        ++report.bins[b].count;
        score_sum[b] += score;
        if (pair.es_cc > pair.es_no_cc) ++improved[b];
        ++report.n;
    }
    if (report.n == 0) throw std::runtime_error("calibration: no scored outcomes");

    double ece = 0.0;
    for (int b = 0; b < bins; ++b) {
        auto& bin = report.bins[b];
        if (bin.count == 0) continue;  // empty bins stay out of the ECE sum
        bin.mean_score = score_sum[b] / bin.count;
        bin.improve_rate = static_cast<double>(improved[b]) / bin.count;
        ece += (static_cast<double>(bin.count) / report.n) *
               std::abs(bin.mean_score - bin.improve_rate);
    }
    report.ece = ece;
    return report;
}

namespace {

LatencySummary summarize(double p, double t_d, double t_r, double t_g) {
    if (t_d < 0.0 || t_r < 0.0 || t_g < 0.0) {
        throw std::invalid_argument("latencies must be non-negative");
    }
    LatencySummary summary;
    summary.rag_rate = p;
    summary.decision_slower_than_generation = t_d >= t_g && t_d > 0.0;
    const double abstain_cost =
        summary.decision_slower_than_generation ? std::max(t_d, t_g) : t_g;
    summary.mean_selective = p * (t_r + t_g) + (1.0 - p) * abstain_cost;
    summary.mean_invariable = t_r + t_g;
    summary.speedup = summary.mean_invariable > 0.0
                          ? 1.0 - summary.mean_selective / summary.mean_invariable
                          : 0.0;
    return summary;
}

}  // namespace

LatencySummary simulate_latency(double rag_rate, const LatencyProfile& profile) {
    if (rag_rate < 0.0 || rag_rate > 1.0) {
        throw std::invalid_argument("rag_rate must be in [0, 1]");
    }
    return summarize(rag_rate, profile.t_d, profile.t_r, profile.t_g);
}

LatencySummary simulate_latency(const std::vector<bool>& decisions,
                                const LatencyProfile& profile) {
    if (decisions.empty()) return simulate_latency(0.0, profile);
    const double p = static_cast<double>(std::count(decisions.begin(), decisions.end(), true)) /
                     static_cast<double>(decisions.size());
    return simulate_latency(p, profile);
}

LatencySummary simulate_latency_fraction(double f, double rag_rate) {
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("f must be in [0, 1]");
    if (rag_rate < 0.0 || rag_rate > 1.0) {
        throw std::invalid_argument("rag_rate must be in [0, 1]");
    }
    // Normalized units: T_r + T_g = 1, so T_r = f and T_g = 1 - f.
    return summarize(rag_rate, 0.0, f, 1.0 - f);
}

LatencySummary simulate_latency(const std::vector<CompletionOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("no outcomes to simulate");
    double selective = 0.0, invariable = 0.0;
    int rag = 0;
    bool warned = false;
    for (const auto& outcome : outcomes) {
        const auto& lat = outcome.latency;
        if (lat.t_d < 0.0 || lat.t_r < 0.0 || lat.t_g < 0.0) {
            throw std::invalid_argument("latencies must be non-negative");
        }
        const bool slow_decision = lat.t_d >= lat.t_g && lat.t_d > 0.0;
        warned = warned || slow_decision;
        const double abstain_cost = slow_decision ? std::max(lat.t_d, lat.t_g) : lat.t_g;
        selective += outcome.decision.retrieve ? lat.t_r + lat.t_g : abstain_cost;
        invariable += lat.t_r + lat.t_g;
        if (outcome.decision.retrieve) ++rag;
    }
    const double n = static_cast<double>(outcomes.size());
    LatencySummary summary;
    summary.rag_rate = rag / n;
    summary.mean_selective = selective / n;
    summary.mean_invariable = invariable / n;
    summary.speedup = summary.mean_invariable > 0.0
                          ? 1.0 - summary.mean_selective / summary.mean_invariable
                          : 0.0;
    summary.decision_slower_than_generation = warned;
    return summary;
}

std::vector<SweepPoint> sweep_thresholds(const std::vector<CompletionOutcome>& outcomes,
                                         const std::vector<CompletionTask>& tasks,
                                         double retrieval_fraction,
                                         const std::vector<double>& thresholds,
                                         const EvalOptions& options) {
    const auto table = task_table(tasks);

    struct Scored {
        double score;
        double es_no_cc;
        double es_cc;
    };
    std::vector<Scored> scored;
    for (const auto& outcome : outcomes) {
        if (!outcome.decision.score) continue;
        const CompletionTask& task = task_for(table, outcome.task_id);
        const CounterfactualPair pair = score_both(outcome, task, options, "sweep_thresholds");
        scored.push_back({*outcome.decision.score, pair.es_no_cc, pair.es_cc});
    }
    if (scored.empty()) throw std::runtime_error("sweep_thresholds: no scored outcomes");

    std::vector<SweepPoint> points;
    for (const double threshold : thresholds) {
        SweepPoint point;
        point.threshold = threshold;
        double es_sum = 0.0;
        int rag = 0;
        for (const auto& s : scored) {
            const bool retrieve = s.score > threshold;
            es_sum += retrieve ? s.es_cc : s.es_no_cc;
            if (retrieve) ++rag;
        }
        const double n = static_cast<double>(scored.size());
        point.es_x100 = 100.0 * es_sum / n;
        point.rag_pct = 100.0 * rag / n;
        point.speedup = simulate_latency_fraction(retrieval_fraction, rag / n).speedup;
        points.push_back(point);
    }
    return points;
}

}  // namespace selrag
