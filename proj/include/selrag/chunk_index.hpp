#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "selrag/corpus.hpp"

namespace selrag {

/// Maximal runs of [A-Za-z0-9_], case-sensitive, deduplicated and sorted.
std::vector<std::string> code_tokens(const std::string& text);

/// Same token rule, but kept in order with repetitions (for n-gram scoring
/// and TF counting).
std::vector<std::string> code_token_sequence(const std::string& text);

struct CodeChunk {
    int chunk_id = 0;
    std::string file_path;
    int start_line = 0;  // 0-based inclusive
    int end_line = 0;    // exclusive
    std::string text;    // LF-join of the covered lines, no trailing newline
    std::vector<std::string> token_bag;  // sorted unique code tokens
};

/// Sliding-window chunk index over one repository. Immutable once built.
struct ChunkIndex {
    std::string repo_ref;
    int chunk_lines = 20;
    int stride_lines = 10;
    std::vector<CodeChunk> chunks;  // sorted by (file_path, start_line)
    std::unordered_map<int, int> next_chunk_map;  // chunk_id -> follower chunk_id

    const CodeChunk* follower_of(int chunk_id) const;
};

/// Read-only view of an index with at most one file excluded.
class IndexView {
public:
    explicit IndexView(const ChunkIndex& index) : index_(&index) {}
    IndexView(const ChunkIndex& index, std::string excluded_path)
        : index_(&index), excluded_(std::move(excluded_path)) {}

    const ChunkIndex& index() const { return *index_; }
    bool visible(const CodeChunk& chunk) const {
        return excluded_.empty() || chunk.file_path != excluded_;
    }
    const std::string& excluded_path() const { return excluded_; }

private:
    const ChunkIndex* index_;
    std::string excluded_;
};

/// Windows start at 0, stride, 2*stride, ... while start < line count; the
/// final window may be partial. Chunks with fewer than `min_nonblank`
/// non-blank lines are dropped. Throws std::invalid_argument on bad
/// parameters.
ChunkIndex build_index(const Repository& repo, int chunk_lines = 20,
                       int stride_lines = 10, int min_nonblank = 1);

IndexView exclude_file(const ChunkIndex& index, const std::string& path);

/// JSONL persistence: one header record with the window parameters, then
/// one record per chunk.
void save_index(const ChunkIndex& index, const std::string& path);
ChunkIndex load_index(const std::string& path);

}  // namespace selrag
