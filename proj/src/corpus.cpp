#include "selrag/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace selrag {

namespace {

std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool has_allowed_extension(const fs::path& path, const std::vector<std::string>& exts) {
    const std::string ext = path.extension().string();
    return std::find(exts.begin(), exts.end(), ext) != exts.end();
}

std::string_view lstrip(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return s.substr(i);
}

bool is_blank(const std::string& line) {
    return lstrip(line).empty();
}

std::size_t indent_width(const std::string& line) {
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    return i;
}

// First dotted-path segment of an import statement's module, or empty when
// the line is not an import. Relative imports ("from .x import y") report ".".
std::string import_head(const std::string& line) {
    std::string_view s = lstrip(line);
    std::string_view module;
    if (s.rfind("import ", 0) == 0) {
        module = lstrip(s.substr(7));
    } else if (s.rfind("from ", 0) == 0) {
        module = lstrip(s.substr(5));
    } else {
        return {};
    }
    if (module.empty()) return {};
    if (module[0] == '.') return ".";
    std::size_t end = 0;
    while (end < module.size() &&
           (std::isalnum(static_cast<unsigned char>(module[end])) || module[end] == '_')) {
        ++end;
    }
    return std::string(module.substr(0, end));
}

std::string top_level_name(const std::string& path) {
    const std::size_t slash = path.find('/');
    if (slash != std::string::npos) return path.substr(0, slash);
    const std::size_t dot = path.rfind('.');
    return dot == std::string::npos ? path : path.substr(0, dot);
}

}  // namespace

std::string SourceFile::text() const {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        out += lines[i];
        if (i + 1 < lines.size() || trailing_newline) out += '\n';
    }
    return out;
}

const SourceFile* Repository::find(const std::string& path) const {
    for (const auto& file : files) {
        if (file.path == path) return &file;
    }
    return nullptr;
}

const char* to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::line: return "line";
        case TaskKind::api: return "api";
        case TaskKind::chunk: return "chunk";
        case TaskKind::function: return "function";
    }
    return "line";
}

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "line") return TaskKind::line;
    if (name == "api") return TaskKind::api;
    if (name == "chunk") return TaskKind::chunk;
    if (name == "function") return TaskKind::function;
    throw std::runtime_error("unknown task kind: " + name);
}

Repository load_repository(const std::string& dir, const LoadOptions& options) {
    const fs::path root(dir);
    std::error_code ec;
    if (!fs::exists(root, ec) || ec) {
        throw std::runtime_error("repository path does not exist: " + dir);
    }
    if (!fs::is_directory(root, ec) || ec) {
        throw std::runtime_error("repository path is not a directory: " + dir);
    }

    std::vector<std::string> rel_paths;
    for (auto it = fs::recursive_directory_iterator(root, ec);
         it != fs::recursive_directory_iterator(); it.increment(ec)) {
        if (ec) throw std::runtime_error("cannot walk repository: " + dir + ": " + ec.message());
        if (!it->is_regular_file()) continue;
        if (!has_allowed_extension(it->path(), options.extensions)) continue;
        std::string rel = fs::relative(it->path(), root).generic_string();
        rel_paths.push_back(std::move(rel));
    }
    std::sort(rel_paths.begin(), rel_paths.end());

    if (rel_paths.empty()) {
        throw std::runtime_error("zero matching files under: " + dir);
    }

    Repository repo;
    repo.root_id = root.filename().string();
    if (repo.root_id.empty()) repo.root_id = root.parent_path().filename().string();

    for (const auto& rel : rel_paths) {
        std::string raw = read_file_bytes(root / rel);

        SourceFile file;
        file.path = rel;

        std::size_t crlf = 0, bare_lf = 0;
        std::string normalized;
        normalized.reserve(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') {
                normalized += '\n';
                ++crlf;
                ++i;
            } else {
                if (raw[i] == '\n') ++bare_lf;
                normalized += raw[i];
            }
        }
        file.newline = crlf == 0 ? NewlineConvention::lf
                     : bare_lf == 0 ? NewlineConvention::crlf
                                    : NewlineConvention::mixed;
        file.trailing_newline = !normalized.empty() && normalized.back() == '\n';

        std::size_t start = 0;
        while (start <= normalized.size()) {
            const std::size_t nl = normalized.find('\n', start);
            if (nl == std::string::npos) {
                if (start < normalized.size()) {
                    file.lines.push_back(normalized.substr(start));
                }
                break;
            }
            file.lines.push_back(normalized.substr(start, nl - start));
            start = nl + 1;
        }

        repo.files.push_back(std::move(file));
    }
    return repo;
}

std::vector<CompletionTask> load_tasks(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read task file: " + path);
    }

    auto field_error = [&path](int line_no, const std::string& field, const char* what) {
        return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what +
                                  " field \"" + field + "\"");
    };

    std::vector<CompletionTask> tasks;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;

        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed JSON: " + e.what());
        }

        auto require_string = [&](const char* field) -> std::string {
            if (!record.contains(field)) throw field_error(line_no, field, "missing required");
            if (!record[field].is_string()) throw field_error(line_no, field, "non-string");
            return record[field].get<std::string>();
        };

        CompletionTask task;
        task.task_id = require_string("task_id");
        task.left_context = require_string("left_context");
        task.right_context = require_string("right_context");
        task.groundtruth = require_string("groundtruth");
        if (task.groundtruth.empty()) throw field_error(line_no, "groundtruth", "empty");
        task.repo = require_string("repo");
        if (record.contains("current_file") && !record["current_file"].is_null()) {
            if (!record["current_file"].is_string()) {
                throw field_error(line_no, "current_file", "non-string");
            }
            task.current_file = record["current_file"].get<std::string>();
        }
        if (record.contains("kind") && !record["kind"].is_null()) {
            try {
                task.kind = task_kind_from_string(record["kind"].get<std::string>());
            } catch (const std::exception&) {
                throw field_error(line_no, "kind", "invalid");
            }
        }
        tasks.push_back(std::move(task));
    }
    return tasks;
}

namespace {

std::vector<FunctionSpan> extract_builtin(const SourceFile& file) {
    std::vector<FunctionSpan> spans;
    const auto& lines = file.lines;
    const int n = static_cast<int>(lines.size());

    for (int i = 0; i < n; ++i) {
        const std::string_view stripped = lstrip(lines[i]);
        if (stripped.rfind("def ", 0) != 0 && stripped.rfind("async def ", 0) != 0) continue;

        const std::size_t sig_indent = indent_width(lines[i]);
        int body_end = i + 1;
        while (body_end < n &&
               (is_blank(lines[body_end]) || indent_width(lines[body_end]) > sig_indent)) {
            ++body_end;
        }
        while (body_end > i + 1 && is_blank(lines[body_end - 1])) --body_end;

        if (body_end <= i + 1) continue;  // signature with no body
        spans.push_back({file.path, i, i + 1, body_end});
    }
    return spans;
}

std::vector<FunctionSpan> extract_external(const SourceFile& file, const std::string& command) {
    const std::string tmp =
        (fs::temp_directory_path() / ("selrag_extract_" + std::to_string(::getpid()) + ".txt"))
            .string();
    {
        std::ofstream out(tmp, std::ios::binary);
        out << file.text();
    }
    const std::string cmd = command + " < " + tmp;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) {
        fs::remove(tmp);
        throw std::runtime_error("extractor command failed to start: " + command);
    }
    std::string output;
    char buf[4096];
    std::size_t got;
    while ((got = ::fread(buf, 1, sizeof(buf), pipe)) > 0) output.append(buf, got);
    const int status = ::pclose(pipe);
    fs::remove(tmp);
    if (status != 0) {
        throw std::runtime_error("extractor command failed (exit " + std::to_string(status) +
                                 "): " + command);
    }

    std::vector<FunctionSpan> spans;
    json parsed;
    try {
        parsed = json::parse(output);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("extractor output is not JSON: ") + e.what());
    }
    for (const auto& item : parsed) {
        FunctionSpan span;
        span.file_path = file.path;
        span.signature_line = item.at("signature_line").get<int>();
        span.body_start_line = item.at("body_start").get<int>();
        span.body_end_line = item.at("body_end").get<int>();
        spans.push_back(span);
    }
    return spans;
}

}  // namespace

std::vector<FunctionSpan> extract_functions(const SourceFile& file,
                                            const FunctionExtractor& extractor) {
    if (extractor.kind == FunctionExtractor::Kind::external_command) {
        return extract_external(file, extractor.command);
    }
    return extract_builtin(file);
}

FilterResult filter_repositories(const std::vector<Repository>& repos,
                                 const FilterCriteria& criteria) {
    FilterResult result;
    for (const auto& repo : repos) {
        RepoDiagnostics diag;
        diag.root_id = repo.root_id;
        diag.file_count = repo.files.size();

        std::vector<std::string> locals;
        for (const auto& file : repo.files) locals.push_back(top_level_name(file.path));

        double total_imports = 0.0, total_local = 0.0;
        double min_imports = 1e300, min_local = 1e300;
        for (const auto& file : repo.files) {
            int imports = 0, local_imports = 0;
            for (const auto& line : file.lines) {
                const std::string head = import_head(line);
                if (head.empty()) continue;
                ++imports;
                if (head == "." ||
                    std::find(locals.begin(), locals.end(), head) != locals.end()) {
                    ++local_imports;
                }
            }
            total_imports += imports;
            total_local += local_imports;
            min_imports = std::min(min_imports, static_cast<double>(imports));
            min_local = std::min(min_local, static_cast<double>(local_imports));
        }
        const double n = static_cast<double>(repo.files.size());
        diag.avg_imports = n > 0 ? total_imports / n : 0.0;
        diag.avg_local_imports = n > 0 ? total_local / n : 0.0;

        const double imports_stat = criteria.per_file_minima ? min_imports : diag.avg_imports;
        const double local_stat = criteria.per_file_minima ? min_local : diag.avg_local_imports;

        if (repo.files.size() < criteria.min_files) {
            diag.reason = "too few files";
        } else if (imports_stat < criteria.min_imports_per_file) {
            diag.reason = "too few imports per file";
        } else if (local_stat < criteria.min_local_imports_per_file) {
            diag.reason = "too few local imports per file";
        } else {
            diag.accepted = true;
            result.accepted.push_back(repo);
        }
        result.diagnostics.push_back(std::move(diag));
    }
    return result;
}

std::string serialize_repository(const Repository& repo) {
    std::string out;
    {
        json header;
        header["root_id"] = repo.root_id;
        header["files"] = repo.files.size();
        out += header.dump();
        out += '\n';
    }
    for (const auto& file : repo.files) {
        json record;
        record["path"] = file.path;
        record["lines"] = file.lines;
        record["trailing_newline"] = file.trailing_newline;
        out += record.dump();
        out += '\n';
    }
    return out;
}

}  // namespace selrag
