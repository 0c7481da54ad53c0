#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "selrag/corpus.hpp"
#include "selrag/lmclient.hpp"
#include "selrag/prompting.hpp"
#include "selrag/retrieval.hpp"
#include "selrag/rng.hpp"

namespace selrag {

enum class TargetOrigin { chunk, function };

/// A mined completion target: the task plus how it was sampled.
struct TargetSample {
    CompletionTask task;
    TargetOrigin origin = TargetOrigin::chunk;
    std::optional<int> k_lines;  // Poisson draw; chunk targets only
    int cluster_id = 0;
};

struct TrainingInstance {
    std::string id;
    std::string left_context;
    std::string right_context;
    std::string groundtruth;
    CrossFileContext cc;
    bool label = false;
    double es_base = 0.0;
    double es_rag = 0.0;
    std::string hyp_base;
    std::string hyp_rag;
    TargetOrigin origin = TargetOrigin::chunk;
};

enum class MaskKind { none, eval_target, gen_target };

/// Token-level training sequence. Exactly one eval_target position (the
/// token right after eof: cc when positive, fim_middle when negative);
/// gen_target positions cover exactly the groundtruth tokens.
struct MaskedSequence {
    std::vector<std::string> tokens;
    std::vector<MaskKind> mask;
    double lambda_weight = 1.0;

    int eval_position() const;  // -1 when absent
};

struct Losses {
    double l_eval = 0.0;
    double l_gen = 0.0;
    double total = 0.0;
};

struct SparseVector {
    std::vector<std::pair<int, double>> entries;  // sorted by term id
};

/// L2-normalized TF-IDF vectors over the given texts; tokenization follows
/// the code-token rule, IDF is computed over these texts as documents.
std::vector<SparseVector> tfidf_vectors(const std::vector<std::string>& texts);

/// Lloyd's algorithm with farthest-point seeding from the seeded generator,
/// at most 100 iterations. Returns a cluster id per input vector.
std::vector<int> kmeans_assign(const std::vector<SparseVector>& vectors, int k, Rng& rng);

struct MiningConfig {
    double poisson_lambda = 3.0;
    double cluster_ratio = 0.2;
    int raw_chunk_lines = 10;
    int function_body_min = 3;
    int function_body_max = 30;
    FunctionExtractor extractor;
};

/// Algorithm: break each file into non-overlapping 10-line chunks, cluster
/// them on TF-IDF features with k = ceil(ratio * n), sample one chunk per
/// cluster, draw k_lines ~ Poisson(lambda) resampled into [1, 10], and cut a
/// k_lines sub-chunk at a random offset as the target.
std::vector<TargetSample> sample_chunk_targets(const Repository& repo,
                                               const MiningConfig& cfg, std::uint64_t seed);

/// Same clustering over the bodies of functions with 3..30 body lines; the
/// target is the whole body (the signature stays in the left context).
std::vector<TargetSample> sample_function_targets(const Repository& repo,
                                                  const MiningConfig& cfg,
                                                  std::uint64_t seed);

/// Retrieval query for a target: windows of 5*k_lines (chunk) or 20 lines
/// (function) on each side, including the groundtruth on a seeded coin flip.
std::string build_datagen_query(const TargetSample& target, bool include_y);

struct LabelConfig {
    double threshold = 0.0;  // label = es_rag - es_base > threshold
    int top_k = 3;
    PromptConfig prompt;
    bool align_fragments = true;
};

/// Contrastive labeling: generate with and without the retrieved context and
/// compare edit similarity against the groundtruth. `index` must be built at
/// the target-appropriate chunk size (10 * k_lines; 50 for functions).
TrainingInstance label_instance(const TargetSample& target, LmClient& lm,
                                const ChunkIndex& index, const std::string& query,
                                const LabelConfig& cfg);

/// Verbalizes one labeled instance into tokens plus a loss mask. Sentinels
/// are atomic tokens; text segments split into non-space runs and newline
/// tokens, matching the fallback token counter.
MaskedSequence build_masked_sequence(const TrainingInstance& instance,
                                     const SpecialTokens& tokens, double lambda,
                                     const std::string& comment_prefix = "# ");

/// One JSONL record per instance: {"tokens", "mask", "label", "meta"}.
void emit_training_corpus(const std::vector<TrainingInstance>& instances,
                          const SpecialTokens& tokens, double lambda, std::ostream& out,
                          const std::string& comment_prefix = "# ");

/// l_eval = -logprob at the eval position; l_gen = mean -logprob over gen
/// positions; total = lambda * l_eval + l_gen. Teacher-forced logprobs must
/// align one-to-one with the sequence tokens.
Losses compute_losses(const MaskedSequence& seq, const std::vector<double>& token_logprobs,
                      double lambda);

}  // namespace selrag
