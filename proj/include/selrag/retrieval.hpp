#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "selrag/chunk_index.hpp"

namespace selrag {

struct ScoredChunk {
    CodeChunk chunk;
    double score = 0.0;
};

/// Ranked cross-file context cc_1..cc_k, descending score.
struct CrossFileContext {
    std::vector<ScoredChunk> entries;
    std::string retriever_name;
    std::string query_text;
    int dedup_collisions = 0;  // follower collisions merged by fragment_align
};

/// Batch text embedding, e.g. lmclient's /embed endpoint.
using EmbedFn =
    std::function<std::vector<std::vector<double>>(const std::vector<std::string>&)>;

enum class SimilarityKind { jaccard, weighted_ngram, dense };

const char* to_string(SimilarityKind kind);
SimilarityKind similarity_from_string(const std::string& name);

struct RetrieverConfig {
    SimilarityKind similarity = SimilarityKind::jaccard;
    int k = 10;
    int ngram_max = 4;
    std::map<std::string, double> keyword_weights;  // weighted_ngram only
    EmbedFn embed;                                  // dense only
    bool align_fragments = true;
};

/// |a n b| / |a u b| over sorted unique token vectors; 0 when both empty.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Geometric mean of clipped n-gram precisions of `chunk` against `query`
/// for n = 1..n_max. Each n-gram weighs the mean of its token weights
/// (default 1.0). Returns 0 when there is no unigram overlap.
double weighted_ngram(const std::vector<std::string>& query,
                      const std::vector<std::string>& chunk, int n_max = 4,
                      const std::map<std::string, double>& keyword_weights = {});

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Cosine similarity of the two texts' embeddings.
double embed_similarity(const std::string& query, const std::string& chunk,
                        const EmbedFn& embed);

/// The k highest-scoring visible chunks. Ties break by
/// (score desc, file_path asc, start_line asc).
std::vector<ScoredChunk> top_k(const IndexView& view, const std::string& query_text,
                               int k, const RetrieverConfig& retriever);

/// Replaces each match with the chunk starting exactly chunk_lines later in
/// the same file, carrying the original score; matches without a follower
/// are kept. Colliding followers are deduplicated keeping the highest score.
std::vector<ScoredChunk> fragment_align(const ChunkIndex& index,
                                        const std::vector<ScoredChunk>& scored,
                                        int* collisions = nullptr);

/// exclude_file -> top_k -> fragment_align, packaged with provenance.
CrossFileContext retrieve_cc(const ChunkIndex& index, const std::string& current_file,
                             const std::string& query_text,
                             const RetrieverConfig& retriever);

}  // namespace selrag
