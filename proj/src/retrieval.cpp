#include "selrag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace selrag {

const char* to_string(SimilarityKind kind) {
    switch (kind) {
        case SimilarityKind::jaccard: return "jaccard";
        case SimilarityKind::weighted_ngram: return "weighted_ngram";
        case SimilarityKind::dense: return "dense";
    }
    return "jaccard";
}

SimilarityKind similarity_from_string(const std::string& name) {
    if (name == "jaccard") return SimilarityKind::jaccard;
    if (name == "weighted_ngram") return SimilarityKind::weighted_ngram;
    if (name == "dense") return SimilarityKind::dense;
    throw std::runtime_error("unknown retriever: " + name);
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t intersection = 0, i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const int cmp = a[i].compare(b[j]);
        if (cmp < 0) {
            ++i;
        } else if (cmp > 0) {
            ++j;
        } else {
            ++intersection;
            ++i;
            ++j;
        }
    }
    const std::size_t unions = a.size() + b.size() - intersection;
    return static_cast<double>(intersection) / static_cast<double>(unions);
}

namespace {

struct NgramStats {
    std::unordered_map<std::string, int> counts;
    std::vector<std::pair<std::string, double>> grams;  // gram, weight
};

// Grams are token joins on '\x1f'; a gram weighs the mean of its tokens'
// weights (1.0 unless the keyword table says otherwise).
NgramStats collect_ngrams(const std::vector<std::string>& tokens, int n,
                          const std::map<std::string, double>& weights) {
    NgramStats stats;
    if (static_cast<int>(tokens.size()) < n) return stats;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string gram;
        double weight = 0.0;
        for (int j = 0; j < n; ++j) {
            if (j > 0) gram += '\x1f';
            gram += tokens[i + j];
            const auto it = weights.find(tokens[i + j]);
            weight += it == weights.end() ? 1.0 : it->second;
        }
        weight /= n;
        ++stats.counts[gram];
        stats.grams.emplace_back(std::move(gram), weight);
    }
    return stats;
}

}  // namespace

double weighted_ngram(const std::vector<std::string>& query,
                      const std::vector<std::string>& chunk, int n_max,
                      const std::map<std::string, double>& keyword_weights) {
    if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
    if (query.empty() || chunk.empty()) return 0.0;

    double log_sum = 0.0;
    int orders_used = 0;
    for (int n = 1; n <= n_max; ++n) {
        NgramStats query_stats = collect_ngrams(query, n, keyword_weights);
        NgramStats chunk_stats = collect_ngrams(chunk, n, keyword_weights);
        // Orders longer than either side carry no signal for ranking.
        if (chunk_stats.grams.empty() || query_stats.grams.empty()) continue;

        // BLEU-style clipping: each chunk gram may match at most its count
        // in the query.
        std::unordered_map<std::string, int> remaining = query_stats.counts;
        double matched = 0.0, total = 0.0;
        for (const auto& [gram, weight] : chunk_stats.grams) {
            total += weight;
            auto it = remaining.find(gram);
            if (it != remaining.end() && it->second > 0) {
                --it->second;
                matched += weight;
            }
        }
        const double precision = total > 0.0 ? matched / total : 0.0;
        if (precision == 0.0) return 0.0;
        log_sum += std::log(precision);
        ++orders_used;
    }
    if (orders_used == 0) return 0.0;
    return std::exp(log_sum / orders_used);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double embed_similarity(const std::string& query, const std::string& chunk,
                        const EmbedFn& embed) {
    if (!embed) throw std::runtime_error("dense retrieval requires an embedding service");
    const auto vectors = embed({query, chunk});
    if (vectors.size() != 2) throw std::runtime_error("embedding service returned wrong batch");
    return cosine(vectors[0], vectors[1]);
}

std::vector<ScoredChunk> top_k(const IndexView& view, const std::string& query_text, int k,
                               const RetrieverConfig& retriever) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");

    std::vector<const CodeChunk*> visible;
    for (const auto& chunk : view.index().chunks) {
        if (view.visible(chunk)) visible.push_back(&chunk);
    }
    if (visible.empty()) return {};

    std::vector<double> scores(visible.size(), 0.0);
    switch (retriever.similarity) {
        case SimilarityKind::jaccard: {
            const std::vector<std::string> query_bag = code_tokens(query_text);
            for (std::size_t i = 0; i < visible.size(); ++i) {
                scores[i] = jaccard(query_bag, visible[i]->token_bag);
            }
            break;
        }
        case SimilarityKind::weighted_ngram: {
            const std::vector<std::string> query_seq = code_token_sequence(query_text);
            for (std::size_t i = 0; i < visible.size(); ++i) {
                scores[i] = weighted_ngram(query_seq, code_token_sequence(visible[i]->text),
                                           retriever.ngram_max, retriever.keyword_weights);
            }
            break;
        }
        case SimilarityKind::dense: {
            if (!retriever.embed) {
                throw std::runtime_error("dense retrieval requires an embedding service");
            }
            std::vector<std::string> texts;
            texts.reserve(visible.size() + 1);
            texts.push_back(query_text);
            for (const CodeChunk* chunk : visible) texts.push_back(chunk->text);
            const auto vectors = retriever.embed(texts);
            if (vectors.size() != texts.size()) {
                throw std::runtime_error("embedding service returned wrong batch");
            }
            for (std::size_t i = 0; i < visible.size(); ++i) {
                scores[i] = cosine(vectors[0], vectors[i + 1]);
            }
            break;
        }
    }

    std::vector<std::size_t> order(visible.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (visible[a]->file_path != visible[b]->file_path) {
            return visible[a]->file_path < visible[b]->file_path;
        }
        return visible[a]->start_line < visible[b]->start_line;
    };
    const std::size_t take = std::min<std::size_t>(k, order.size());
    std::partial_sort(order.begin(), order.begin() + take, order.end(), better);

    std::vector<ScoredChunk> result;
    result.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        result.push_back({*visible[order[i]], scores[order[i]]});
    }
    return result;
}

std::vector<ScoredChunk> fragment_align(const ChunkIndex& index,
                                        const std::vector<ScoredChunk>& scored,
                                        int* collisions) {
    std::unordered_map<int, std::size_t> position_of;
    for (std::size_t i = 0; i < index.chunks.size(); ++i) {
        position_of[index.chunks[i].chunk_id] = i;
    }

    std::vector<ScoredChunk> aligned;
    std::unordered_map<int, bool> seen;
    int dropped = 0;
    for (const auto& entry : scored) {
        const CodeChunk* replacement = &entry.chunk;
        const auto follower = index.next_chunk_map.find(entry.chunk.chunk_id);
        if (follower != index.next_chunk_map.end()) {
            const auto pos = position_of.find(follower->second);
            if (pos != position_of.end()) replacement = &index.chunks[pos->second];
        }
        if (seen[replacement->chunk_id]) {
            // Entries arrive score-descending, so the first occurrence
            // already carries the max score.
            ++dropped;
            continue;
        }
        seen[replacement->chunk_id] = true;
        aligned.push_back({*replacement, entry.score});
    }
    if (collisions) *collisions = dropped;
    return aligned;
}

CrossFileContext retrieve_cc(const ChunkIndex& index, const std::string& current_file,
                             const std::string& query_text, const RetrieverConfig& retriever) {
    const IndexView view = current_file.empty() ? IndexView(index)
                                                : exclude_file(index, current_file);
    std::vector<ScoredChunk> matches = top_k(view, query_text, retriever.k, retriever);

    CrossFileContext cc;
    cc.retriever_name = to_string(retriever.similarity);
    cc.query_text = query_text;
    cc.entries = retriever.align_fragments
                     ? fragment_align(index, matches, &cc.dedup_collisions)
                     : std::move(matches);
    return cc;
}

}  // namespace selrag
