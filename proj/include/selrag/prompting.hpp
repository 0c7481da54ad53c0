#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selrag/corpus.hpp"
#include "selrag/retrieval.hpp"

namespace selrag {

/// Sentinel token names. eof and cc are the two retrieval-control tokens;
/// the fim_* triple is the standard fill-in-the-middle set. Names are
/// configuration so they can match whatever tokenizer the serving LM uses.
struct SpecialTokens {
    std::string fim_prefix = "<fim_prefix>";
    std::string fim_suffix = "<fim_suffix>";
    std::string fim_middle = "<fim_middle>";
    std::string eof = "<eof>";
    std::string cc = "<cc>";
};

enum class PromptKind { fim, l2r, decision, training_pos, training_neg };

struct Segment {
    std::string name;
    std::size_t begin = 0;
    std::size_t end = 0;  // exclusive
};

struct SegmentBudget {
    int kept_tokens = 0;
    int dropped_tokens = 0;
};

struct TruncationReport {
    SegmentBudget left;
    SegmentBudget right;
    SegmentBudget cc;
};

struct PromptBundle {
    PromptKind kind = PromptKind::fim;
    std::string text;
    std::vector<Segment> segments;  // spans partition text
    TruncationReport budget_report;

    std::string segment_text(const std::string& name) const;
};

using TokenCounter = std::function<int(const std::string&)>;

struct TruncationBudgets {
    int left = 1024;
    int right = 512;
    int cc = 512;
};

struct TruncatedParts {
    std::string left;
    std::string right;
    std::string cc;
    TruncationReport report;
};

/// Prompt-side settings for one run. Zero means "task-kind default": the
/// query matches the index chunk size and generation caps at 50 tokens
/// (256 for function completion).
struct PromptConfig {
    SpecialTokens tokens;
    TruncationBudgets budgets;
    std::string comment_prefix = "# ";
    int query_lines = 0;
    int max_tokens = 0;
};

/// Last `query_lines` lines of the left context, verbatim (the whole left
/// context when shorter). A trailing newline is treated as a terminator, not
/// an extra line.
std::string build_query(const CompletionTask& task, int query_lines);

/// Data-generation query: last `left_lines` of X_l, optionally the
/// groundtruth, then the first `right_lines` of X_r, preserving exact bytes.
std::string build_window_query(const CompletionTask& task, int left_lines,
                               int right_lines, bool include_y);

/// Comment-verbalized cross-file context: one header line, then per fragment
/// a provenance line and the chunk body as comments, fragments separated by a
/// bare comment line. Empty CC verbalizes to the empty string.
std::string verbalize_cc(const CrossFileContext& cc, const std::string& comment_prefix = "# ");

PromptBundle build_fim_prompt(const std::string& left, const std::string& right,
                              const std::string& cc_text, const SpecialTokens& tokens = {});

PromptBundle build_l2r_prompt(const std::string& left, const std::string& right,
                              const std::string& cc_text);

/// fim_prefix + left + fim_suffix + right + eof; the prompt whose next-token
/// distribution carries the retrieval self-assessment.
PromptBundle build_decision_prompt(const std::string& left, const std::string& right,
                                   const SpecialTokens& tokens = {});

/// Fine-tuning verbalization. Positive: decision prompt + cc + '\n' +
/// verbalized CC + fim_middle + Y. Negative: decision prompt + fim_middle + Y.
/// Both branches share the decision prompt as an exact prefix.
PromptBundle build_training_sequence(const std::string& left, const std::string& right,
                                     const std::string& groundtruth,
                                     const std::string& cc_text, bool label,
                                     const SpecialTokens& tokens = {});

/// Left context keeps its suffix, right context its prefix, CC its prefix
/// (whole trailing fragments dropped first). Cuts at line boundaries unless a
/// single line alone exceeds the budget.
TruncatedParts truncate_parts(const std::string& left, const std::string& right,
                              const std::string& cc_text, const TruncationBudgets& budgets,
                              const TokenCounter& count,
                              const std::string& comment_prefix = "# ");

}  // namespace selrag
