#include "selrag/chunk_index.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace selrag {

namespace {

bool is_token_char(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
           c == '_';
}

bool line_is_blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(),
                       [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

std::vector<std::string> code_token_sequence(const std::string& text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!is_token_char(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size() && is_token_char(text[j])) ++j;
        tokens.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return tokens;
}

std::vector<std::string> code_tokens(const std::string& text) {
    std::vector<std::string> tokens = code_token_sequence(text);
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return tokens;
}

const CodeChunk* ChunkIndex::follower_of(int chunk_id) const {
    const auto it = next_chunk_map.find(chunk_id);
    if (it == next_chunk_map.end()) return nullptr;
    for (const auto& chunk : chunks) {
        if (chunk.chunk_id == it->second) return &chunk;
    }
    return nullptr;
}

ChunkIndex build_index(const Repository& repo, int chunk_lines, int stride_lines,
                       int min_nonblank) {
    if (chunk_lines < 1) throw std::invalid_argument("chunk_lines must be >= 1");
    if (stride_lines < 1 || stride_lines > chunk_lines) {
        throw std::invalid_argument("stride_lines must be in [1, chunk_lines]");
    }

    ChunkIndex index;
    index.repo_ref = repo.root_id;
    index.chunk_lines = chunk_lines;
    index.stride_lines = stride_lines;

    // Files arrive path-sorted from load_repository; chunk ids are assigned
    // in (file_path, start_line) order so identical inputs give identical ids.
    std::vector<const SourceFile*> files;
    for (const auto& file : repo.files) files.push_back(&file);
    std::sort(files.begin(), files.end(),
              [](const SourceFile* a, const SourceFile* b) { return a->path < b->path; });

    int next_id = 0;
    for (const SourceFile* file : files) {
        const int total = static_cast<int>(file->lines.size());
        // (start of emitted chunk) -> chunk_id, for the follower map
        std::map<int, int> emitted_at;

        for (int start = 0; start < total; start += stride_lines) {
            const int end = std::min(start + chunk_lines, total);
            int nonblank = 0;
            std::string text;
            for (int line = start; line < end; ++line) {
                if (line > start) text += '\n';
                text += file->lines[line];
                if (!line_is_blank(file->lines[line])) ++nonblank;
            }
            if (nonblank < min_nonblank) continue;

            CodeChunk chunk;
            chunk.chunk_id = next_id++;
            chunk.file_path = file->path;
            chunk.start_line = start;
            chunk.end_line = end;
            chunk.text = std::move(text);
            chunk.token_bag = code_tokens(chunk.text);
            emitted_at[start] = chunk.chunk_id;
            index.chunks.push_back(std::move(chunk));
        }

        for (const auto& [start, id] : emitted_at) {
            const auto follower = emitted_at.find(start + chunk_lines);
            if (follower != emitted_at.end()) {
                index.next_chunk_map[id] = follower->second;
            }
        }
    }
    return index;
}

IndexView exclude_file(const ChunkIndex& index, const std::string& path) {
    return IndexView(index, path);
}

void save_index(const ChunkIndex& index, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index file: " + path);

    json header;
    header["repo"] = index.repo_ref;
    header["chunk_lines"] = index.chunk_lines;
    header["stride_lines"] = index.stride_lines;
    out << header.dump() << '\n';

    for (const auto& chunk : index.chunks) {
        json record;
        record["id"] = chunk.chunk_id;
        record["file"] = chunk.file_path;
        record["start"] = chunk.start_line;
        record["end"] = chunk.end_line;
        record["text"] = chunk.text;
        out << record.dump() << '\n';
    }
}

ChunkIndex load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read index file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("index file is empty: " + path);
    const json header = json::parse(line);

    ChunkIndex index;
    index.repo_ref = header.at("repo").get<std::string>();
    index.chunk_lines = header.at("chunk_lines").get<int>();
    index.stride_lines = header.at("stride_lines").get<int>();

    std::map<std::pair<std::string, int>, int> at;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json record = json::parse(line);
        CodeChunk chunk;
        chunk.chunk_id = record.at("id").get<int>();
        chunk.file_path = record.at("file").get<std::string>();
        chunk.start_line = record.at("start").get<int>();
        chunk.end_line = record.at("end").get<int>();
        chunk.text = record.at("text").get<std::string>();
        chunk.token_bag = code_tokens(chunk.text);
        at[{chunk.file_path, chunk.start_line}] = chunk.chunk_id;
        index.chunks.push_back(std::move(chunk));
    }
    for (const auto& chunk : index.chunks) {
        const auto follower = at.find({chunk.file_path, chunk.start_line + index.chunk_lines});
        if (follower != at.end()) index.next_chunk_map[chunk.chunk_id] = follower->second;
    }
    return index;
}

}  // namespace selrag
