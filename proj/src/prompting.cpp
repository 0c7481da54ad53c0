#include "selrag/prompting.hpp"

#include <algorithm>
#include <stdexcept>

namespace selrag {

namespace {

// Start offsets of every line; a trailing newline terminates the last line
// rather than opening an empty one.
std::vector<std::size_t> line_starts(const std::string& text) {
    std::vector<std::size_t> starts;
    if (text.empty()) return starts;
    starts.push_back(0);
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] == '\n') starts.push_back(i + 1);
    }
    return starts;
}

std::string last_lines(const std::string& text, int n) {
    if (n <= 0) return {};
    const auto starts = line_starts(text);
    if (static_cast<int>(starts.size()) <= n) return text;
    return text.substr(starts[starts.size() - n]);
}

std::string first_lines(const std::string& text, int n) {
    if (n <= 0) return {};
    const auto starts = line_starts(text);
    if (static_cast<int>(starts.size()) <= n) return text;
    return text.substr(0, starts[n]);
}

void append_segment(PromptBundle& bundle, const std::string& name, const std::string& text) {
    const std::size_t begin = bundle.text.size();
    bundle.text += text;
    bundle.segments.push_back({name, begin, bundle.text.size()});
}

std::string separator_line(const std::string& comment_prefix) {
    std::string sep = comment_prefix;
    while (!sep.empty() && (sep.back() == ' ' || sep.back() == '\t')) sep.pop_back();
    return sep;
}

}  // namespace

std::string PromptBundle::segment_text(const std::string& name) const {
    for (const auto& segment : segments) {
        if (segment.name == name) {
            return text.substr(segment.begin, segment.end - segment.begin);
        }
    }
    return {};
}

std::string build_query(const CompletionTask& task, int query_lines) {
    if (query_lines < 1) throw std::invalid_argument("query_lines must be >= 1");
    return last_lines(task.left_context, query_lines);
}

std::string build_window_query(const CompletionTask& task, int left_lines, int right_lines,
                               bool include_y) {
    std::string query = last_lines(task.left_context, left_lines);
    if (include_y) query += task.groundtruth;
    query += first_lines(task.right_context, right_lines);
    return query;
}

std::string verbalize_cc(const CrossFileContext& cc, const std::string& comment_prefix) {
    if (cc.entries.empty()) return {};

    const std::string separator = separator_line(comment_prefix);
    std::string out = comment_prefix +
                      "Here are some relevant code fragments from other files of the repo:\n";
    bool first = true;
    for (const auto& entry : cc.entries) {
        if (!first) out += separator + "\n";
        first = false;
        out += comment_prefix + "the below code fragment can be found in: " +
               entry.chunk.file_path + "\n";
        std::size_t start = 0;
        const std::string& body = entry.chunk.text;
        while (start <= body.size()) {
            const std::size_t nl = body.find('\n', start);
            const std::size_t end = nl == std::string::npos ? body.size() : nl;
            out += comment_prefix + body.substr(start, end - start) + "\n";
            if (nl == std::string::npos) break;
            start = nl + 1;
        }
    }
    return out;
}

PromptBundle build_fim_prompt(const std::string& left, const std::string& right,
                              const std::string& cc_text, const SpecialTokens& tokens) {
    PromptBundle bundle;
    bundle.kind = PromptKind::fim;
    append_segment(bundle, "fim_prefix", tokens.fim_prefix);
    append_segment(bundle, "left", left);
    append_segment(bundle, "fim_suffix", tokens.fim_suffix);
    append_segment(bundle, "right", right);
    append_segment(bundle, "cc", cc_text);
    append_segment(bundle, "fim_middle", tokens.fim_middle);
    return bundle;
}

PromptBundle build_l2r_prompt(const std::string& left, const std::string& right,
                              const std::string& cc_text) {
    PromptBundle bundle;
    bundle.kind = PromptKind::l2r;
    append_segment(bundle, "right", right);
    append_segment(bundle, "cc", cc_text);
    append_segment(bundle, "left", left);
    return bundle;
}

PromptBundle build_decision_prompt(const std::string& left, const std::string& right,
                                   const SpecialTokens& tokens) {
    PromptBundle bundle;
    bundle.kind = PromptKind::decision;
    append_segment(bundle, "fim_prefix", tokens.fim_prefix);
    append_segment(bundle, "left", left);
    append_segment(bundle, "fim_suffix", tokens.fim_suffix);
    append_segment(bundle, "right", right);
    append_segment(bundle, "eof", tokens.eof);
    return bundle;
}

PromptBundle build_training_sequence(const std::string& left, const std::string& right,
                                     const std::string& groundtruth,
                                     const std::string& cc_text, bool label,
                                     const SpecialTokens& tokens) {
    PromptBundle bundle = build_decision_prompt(left, right, tokens);
    bundle.kind = label ? PromptKind::training_pos : PromptKind::training_neg;
    if (label) {
        append_segment(bundle, "cc_token", tokens.cc);
        append_segment(bundle, "cc_sep", "\n");
        append_segment(bundle, "cc", cc_text);
    }
    append_segment(bundle, "fim_middle", tokens.fim_middle);
    append_segment(bundle, "groundtruth", groundtruth);
    return bundle;
}

namespace {

// Largest value in [lo, hi] whose image under `fits` is true; `fits` must be
// monotone (true below, false above). Assumes fits(lo).
std::size_t monotone_max(std::size_t lo, std::size_t hi,
                         const std::function<bool(std::size_t)>& fits) {
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo + 1) / 2;
        if (fits(mid)) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    return lo;
}

std::string truncate_keep_suffix(const std::string& text, int budget,
                                 const TokenCounter& count) {
    if (count(text) <= budget) return text;
    if (budget <= 0) return {};
    const auto starts = line_starts(text);
    const std::size_t total = starts.size();

    // Most trailing lines that fit.
    const std::size_t keep_lines = monotone_max(0, total, [&](std::size_t k) {
        return k == 0 || count(text.substr(starts[total - k])) <= budget;
    });
    if (keep_lines > 0) return text.substr(starts[total - keep_lines]);

    // A single line exceeds the budget: hard cut inside it.
    const std::size_t keep_chars = monotone_max(0, text.size(), [&](std::size_t c) {
        return c == 0 || count(text.substr(text.size() - c)) <= budget;
    });
    return text.substr(text.size() - keep_chars);
}

std::string truncate_keep_prefix(const std::string& text, int budget,
                                 const TokenCounter& count) {
    if (count(text) <= budget) return text;
    if (budget <= 0) return {};
    const auto starts = line_starts(text);
    const std::size_t total = starts.size();

    const auto prefix_through = [&](std::size_t k) {
        return k >= total ? text : text.substr(0, starts[k]);
    };
    const std::size_t keep_lines = monotone_max(0, total, [&](std::size_t k) {
        return k == 0 || count(prefix_through(k)) <= budget;
    });
    if (keep_lines > 0) return prefix_through(keep_lines);

    const std::size_t keep_chars = monotone_max(0, text.size(), [&](std::size_t c) {
        return c == 0 || count(text.substr(0, c)) <= budget;
    });
    return text.substr(0, keep_chars);
}

std::string truncate_cc(const std::string& cc_text, int budget, const TokenCounter& count,
                        const std::string& comment_prefix) {
    if (count(cc_text) <= budget) return cc_text;
    if (budget <= 0) return {};

    // Whole trailing fragments first: every separator line opens a cut point.
    const std::string separator = separator_line(comment_prefix) + "\n";
    std::vector<std::size_t> cuts;
    const auto starts = line_starts(cc_text);
    for (const std::size_t offset : starts) {
        if (cc_text.compare(offset, separator.size(), separator) == 0 && offset > 0) {
            cuts.push_back(offset);
        }
    }
    std::string best;
    for (const std::size_t cut : cuts) {
        const std::string candidate = cc_text.substr(0, cut);
        if (count(candidate) <= budget && candidate.size() > best.size()) best = candidate;
    }
    if (!best.empty()) return best;

    // Down to (possibly part of) the first fragment.
    return truncate_keep_prefix(cc_text, budget, count);
}

}  // namespace

TruncatedParts truncate_parts(const std::string& left, const std::string& right,
                              const std::string& cc_text, const TruncationBudgets& budgets,
                              const TokenCounter& count, const std::string& comment_prefix) {
    if (!count) throw std::invalid_argument("truncate_parts requires a token counter");
    TruncatedParts parts;
    parts.left = truncate_keep_suffix(left, budgets.left, count);
    parts.right = truncate_keep_prefix(right, budgets.right, count);
    parts.cc = truncate_cc(cc_text, budgets.cc, count, comment_prefix);

    parts.report.left.kept_tokens = count(parts.left);
    parts.report.left.dropped_tokens = count(left) - parts.report.left.kept_tokens;
    parts.report.right.kept_tokens = count(parts.right);
    parts.report.right.dropped_tokens = count(right) - parts.report.right.kept_tokens;
    parts.report.cc.kept_tokens = count(parts.cc);
    parts.report.cc.dropped_tokens = count(cc_text) - parts.report.cc.kept_tokens;
    return parts;
}

}  // namespace selrag
