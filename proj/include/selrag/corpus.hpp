#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace selrag {

enum class NewlineConvention { lf, crlf, mixed };

/// One source file, newline-normalized. `lines` never contain '\n';
/// the original convention is recorded so bytes can be reconstructed.
struct SourceFile {
    std::string path;  // repo-relative, '/'-separated
    std::vector<std::string> lines;
    NewlineConvention newline = NewlineConvention::lf;
    bool trailing_newline = true;

    /// LF-joined text (with trailing newline iff the original had one).
    std::string text() const;
};

struct Repository {
    std::string root_id;
    std::vector<SourceFile> files;

    const SourceFile* find(const std::string& path) const;
};

enum class TaskKind { line, api, chunk, function };

const char* to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// A single completion request: complete the span between left and right
/// context against groundtruth.
struct CompletionTask {
    std::string task_id;
    std::string left_context;
    std::string right_context;
    std::string groundtruth;
    std::string repo;
    std::optional<std::string> current_file;
    TaskKind kind = TaskKind::line;
};

struct FunctionSpan {
    std::string file_path;
    int signature_line = 0;   // 0-based line index of the def line
    int body_start_line = 0;  // inclusive
    int body_end_line = 0;    // exclusive

    int body_line_count() const { return body_end_line - body_start_line; }
};

struct FunctionExtractor {
    enum class Kind { builtin_indent, external_command };
    Kind kind = Kind::builtin_indent;
    std::string command;  // external mode: stdin = file text, stdout = JSON spans

    static FunctionExtractor builtin() { return {}; }
    static FunctionExtractor external(std::string cmd) {
        return {Kind::external_command, std::move(cmd)};
    }
};

struct LoadOptions {
    std::vector<std::string> extensions = {".py"};
};

/// Criteria for keeping a repository in the data-generation pool.
/// Thresholds apply to per-file averages by default; `per_file_minima`
/// switches to requiring every file to satisfy them individually.
struct FilterCriteria {
    double min_imports_per_file = 3.0;
    double min_local_imports_per_file = 2.0;
    std::size_t min_files = 5;
    bool per_file_minima = false;
};

struct RepoDiagnostics {
    std::string root_id;
    std::size_t file_count = 0;
    double avg_imports = 0.0;
    double avg_local_imports = 0.0;
    bool accepted = false;
    std::string reason;  // empty when accepted
};

struct FilterResult {
    std::vector<Repository> accepted;
    std::vector<RepoDiagnostics> diagnostics;
};

/// Loads every file matching the extension allowlist under `dir`.
/// Files are ordered lexicographically by repo-relative path; CRLF is
/// normalized to LF with the convention recorded per file.
/// Throws std::runtime_error on unreadable paths or zero matching files.
Repository load_repository(const std::string& dir, const LoadOptions& options = {});

/// Parses the task JSONL format. Malformed records raise errors that name
/// the offending field and line number.
std::vector<CompletionTask> load_tasks(const std::string& path);

/// Function spans via the indentation heuristic (or an external parser
/// command). Spans are non-overlapping per nesting level; nested defs are
/// reported separately. Callers apply size filters.
std::vector<FunctionSpan> extract_functions(const SourceFile& file,
                                            const FunctionExtractor& extractor = {});

FilterResult filter_repositories(const std::vector<Repository>& repos,
                                 const FilterCriteria& criteria = {});

/// Deterministic JSONL dump of a repository (used for round-trip checks).
std::string serialize_repository(const Repository& repo);

}  // namespace selrag
