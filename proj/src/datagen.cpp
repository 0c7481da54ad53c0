#include "selrag/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selrag/chunk_index.hpp"
#include "selrag/eval.hpp"

using ordered_json = nlohmann::ordered_json;

namespace selrag {

int Rng::next_poisson(double lambda) {
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= next_double();
    } while (p > limit);
    return k - 1;
}

std::vector<SparseVector> tfidf_vectors(const std::vector<std::string>& texts) {
    // Term ids in lexicographic order keep the vectors reproducible.
    std::map<std::string, int> term_ids;
    std::vector<std::map<std::string, int>> counts(texts.size());
    std::map<std::string, int> df;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        for (const auto& token : code_token_sequence(texts[i])) ++counts[i][token];
        for (const auto& [token, _] : counts[i]) {
            ++df[token];
            term_ids.emplace(token, 0);
        }
    }
    int next_id = 0;
    for (auto& [term, id] : term_ids) id = next_id++;

    const double n = static_cast<double>(texts.size());
    std::vector<SparseVector> vectors(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) {
        double norm2 = 0.0;
        for (const auto& [token, tf] : counts[i]) {
            const double idf = std::log((1.0 + n) / (1.0 + df[token])) + 1.0;
            const double w = tf * idf;
            vectors[i].entries.emplace_back(term_ids[token], w);
            norm2 += w * w;
        }
        if (norm2 > 0.0) {
            const double inv = 1.0 / std::sqrt(norm2);
            for (auto& [_, w] : vectors[i].entries) w *= inv;
        }
    }
    return vectors;
}

namespace {

double sparse_dot_dense(const SparseVector& x, const std::vector<double>& c) {
    double dot = 0.0;
    for (const auto& [id, w] : x.entries) dot += w * c[id];
    return dot;
}

double sparse_dot(const SparseVector& a, const SparseVector& b) {
    double dot = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.entries.size() && j < b.entries.size()) {
        if (a.entries[i].first < b.entries[j].first) {
            ++i;
        } else if (a.entries[i].first > b.entries[j].first) {
            ++j;
        } else {
            dot += a.entries[i].second * b.entries[j].second;
            ++i;
            ++j;
        }
    }
    return dot;
}

}  // namespace

std::vector<int> kmeans_assign(const std::vector<SparseVector>& vectors, int k, Rng& rng) {
    const int n = static_cast<int>(vectors.size());
    if (n == 0) return {};
    k = std::clamp(k, 1, n);

    int dims = 0;
    for (const auto& v : vectors) {
        for (const auto& [id, _] : v.entries) dims = std::max(dims, id + 1);
    }

    // Farthest-point seeding: random first pick, then max-min distance.
    std::vector<int> seeds{static_cast<int>(rng.next_below(n))};
    std::vector<double> min_dist(n);
    for (int i = 0; i < n; ++i) {
        min_dist[i] = 2.0 - 2.0 * sparse_dot(vectors[i], vectors[seeds[0]]);
    }
    while (static_cast<int>(seeds.size()) < k) {
        int best = 0;
        for (int i = 1; i < n; ++i) {
            if (min_dist[i] > min_dist[best]) best = i;
        }
        seeds.push_back(best);
        for (int i = 0; i < n; ++i) {
            min_dist[i] =
                std::min(min_dist[i], 2.0 - 2.0 * sparse_dot(vectors[i], vectors[best]));
        }
    }

    std::vector<std::vector<double>> centroids(k, std::vector<double>(dims, 0.0));
    std::vector<double> centroid_norm2(k, 0.0);
    const auto set_centroid = [&](int c, const SparseVector& v) {
        std::fill(centroids[c].begin(), centroids[c].end(), 0.0);
        double norm2 = 0.0;
        for (const auto& [id, w] : v.entries) {
            centroids[c][id] = w;
            norm2 += w * w;
        }
        centroid_norm2[c] = norm2;
    };
    for (int c = 0; c < k; ++c) set_centroid(c, vectors[seeds[c]]);

    std::vector<int> assignment(n, -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_dist = 1e300;
            for (int c = 0; c < k; ++c) {
                // x is unit-norm: ||x - c||^2 = 1 - 2 x.c + ||c||^2
                const double dist =
                    1.0 - 2.0 * sparse_dot_dense(vectors[i], centroids[c]) + centroid_norm2[c];
                if (dist < best_dist - 1e-12) {
                    best_dist = dist;
                    best = c;
                }
            }
            if (assignment[i] != best) {
                assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) break;

        for (int c = 0; c < k; ++c) {
            std::fill(centroids[c].begin(), centroids[c].end(), 0.0);
        }
        std::vector<int> sizes(k, 0);
        for (int i = 0; i < n; ++i) {
            ++sizes[assignment[i]];
            for (const auto& [id, w] : vectors[i].entries) {
                centroids[assignment[i]][id] += w;
            }
        }
        for (int c = 0; c < k; ++c) {
            if (sizes[c] == 0) {
                set_centroid(c, vectors[seeds[c]]);  // empty: fall back to its seed
                continue;
            }
            double norm2 = 0.0;
            for (double& w : centroids[c]) {
                w /= sizes[c];
                norm2 += w * w;
            }
            centroid_norm2[c] = norm2;
        }
    }
    return assignment;
}

namespace {

std::vector<std::size_t> char_line_starts(const std::string& text) {
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 0; i + 1 < text.size(); ++i) {
        if (text[i] == '\n') starts.push_back(i + 1);
    }
    return starts;
}

// Splits file text at line boundaries [from, to) into (left, target, right),
// preserving exact bytes.
struct SpanSplit {
    std::string left;
    std::string target;
    std::string right;
};

SpanSplit split_at_lines(const std::string& text, int from_line, int to_line) {
    const auto starts = char_line_starts(text);
    const std::size_t begin = starts[from_line];
    const std::size_t end =
        to_line < static_cast<int>(starts.size()) ? starts[to_line] : text.size();
    return {text.substr(0, begin), text.substr(begin, end - begin), text.substr(end)};
}

int cluster_count(double ratio, std::size_t n) {
    return std::max(1, static_cast<int>(std::ceil(ratio * static_cast<double>(n))));
}

}  // namespace

std::vector<TargetSample> sample_chunk_targets(const Repository& repo,
                                               const MiningConfig& cfg, std::uint64_t seed) {
    struct RawChunk {
        const SourceFile* file;
        int start;
        std::string text;
    };
    std::vector<RawChunk> raw;
    for (const auto& file : repo.files) {
        const int total = static_cast<int>(file.lines.size());
        for (int start = 0; start + cfg.raw_chunk_lines <= total;
             start += cfg.raw_chunk_lines) {
            std::string text;
            for (int i = start; i < start + cfg.raw_chunk_lines; ++i) {
                if (i > start) text += '\n';
                text += file.lines[i];
            }
            raw.push_back({&file, start, std::move(text)});
        }
    }
    if (raw.empty()) {
        throw std::runtime_error("repository " + repo.root_id +
                                 " has no chunks to mine (files shorter than " +
                                 std::to_string(cfg.raw_chunk_lines) + " lines)");
    }

    std::vector<std::string> texts;
    texts.reserve(raw.size());
    for (const auto& chunk : raw) texts.push_back(chunk.text);
    const auto vectors = tfidf_vectors(texts);

    Rng rng(seed);
    const int k = cluster_count(cfg.cluster_ratio, raw.size());
    const auto assignment = kmeans_assign(vectors, k, rng);

    std::vector<std::vector<int>> members(k);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        members[assignment[i]].push_back(static_cast<int>(i));
    }

    std::vector<TargetSample> targets;
    for (int c = 0; c < k; ++c) {
        if (members[c].empty()) continue;
        const RawChunk& chunk = raw[members[c][rng.next_below(members[c].size())]];

        int k_lines;
        do {
            k_lines = rng.next_poisson(cfg.poisson_lambda);
        } while (k_lines < 1 || k_lines > cfg.raw_chunk_lines);
        const int offset =
            static_cast<int>(rng.next_below(cfg.raw_chunk_lines - k_lines + 1));

        const std::string text = chunk.file->text();
        const int from = chunk.start + offset;
        const SpanSplit split = split_at_lines(text, from, from + k_lines);
        if (split.target.empty()) continue;

        TargetSample target;
        target.origin = TargetOrigin::chunk;
        target.k_lines = k_lines;
        target.cluster_id = c;
        target.task.task_id = repo.root_id + ":" + chunk.file->path + ":" +
                              std::to_string(from) + "+" + std::to_string(k_lines);
        target.task.left_context = split.left;
        target.task.right_context = split.right;
        target.task.groundtruth = split.target;
        target.task.repo = repo.root_id;
        target.task.current_file = chunk.file->path;
        target.task.kind = TaskKind::chunk;
        targets.push_back(std::move(target));
    }
    return targets;
}

std::vector<TargetSample> sample_function_targets(const Repository& repo,
                                                  const MiningConfig& cfg,
                                                  std::uint64_t seed) {
    struct Candidate {
        const SourceFile* file;
        FunctionSpan span;
        std::string body;
    };
    std::vector<Candidate> functions;
    for (const auto& file : repo.files) {
        for (const auto& span : extract_functions(file, cfg.extractor)) {
            const int body_lines = span.body_line_count();
            if (body_lines < cfg.function_body_min || body_lines > cfg.function_body_max) {
                continue;
            }
            std::string body;
            for (int i = span.body_start_line; i < span.body_end_line; ++i) {
                if (i > span.body_start_line) body += '\n';
                body += file.lines[i];
            }
            functions.push_back({&file, span, std::move(body)});
        }
    }
    if (functions.empty()) {
        throw std::runtime_error("repository " + repo.root_id +
                                 " has no functions with " +
                                 std::to_string(cfg.function_body_min) + ".." +
                                 std::to_string(cfg.function_body_max) + " body lines");
    }

    std::vector<std::string> texts;
    texts.reserve(functions.size());
    for (const auto& fn : functions) texts.push_back(fn.body);
    const auto vectors = tfidf_vectors(texts);

    Rng rng(seed);
    const int k = cluster_count(cfg.cluster_ratio, functions.size());
    const auto assignment = kmeans_assign(vectors, k, rng);

    std::vector<std::vector<int>> members(k);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        members[assignment[i]].push_back(static_cast<int>(i));
    }

    std::vector<TargetSample> targets;
    for (int c = 0; c < k; ++c) {
        if (members[c].empty()) continue;
        const Candidate& fn = functions[members[c][rng.next_below(members[c].size())]];

        const std::string text = fn.file->text();
        const SpanSplit split =
            split_at_lines(text, fn.span.body_start_line, fn.span.body_end_line);
        if (split.target.empty()) continue;

        TargetSample target;
        target.origin = TargetOrigin::function;
        target.cluster_id = c;
        target.task.task_id = repo.root_id + ":" + fn.file->path + ":def@" +
                              std::to_string(fn.span.signature_line);
        target.task.left_context = split.left;  // signature line included
        target.task.right_context = split.right;
        target.task.groundtruth = split.target;
        target.task.repo = repo.root_id;
        target.task.current_file = fn.file->path;
        target.task.kind = TaskKind::function;
        targets.push_back(std::move(target));
    }
    return targets;
}

std::string build_datagen_query(const TargetSample& target, bool include_y) {
    const int window = target.origin == TargetOrigin::chunk
                           ? 5 * target.k_lines.value_or(1)
                           : 20;
    return build_window_query(target.task, window, window, include_y);
}

TrainingInstance label_instance(const TargetSample& target, LmClient& lm,
                                const ChunkIndex& index, const std::string& query,
                                const LabelConfig& cfg) {
    RetrieverConfig retriever;
    retriever.similarity = SimilarityKind::jaccard;
    retriever.k = cfg.top_k;
    retriever.align_fragments = cfg.align_fragments;

    const CompletionTask& task = target.task;
    const CrossFileContext cc =
        retrieve_cc(index, task.current_file.value_or(""), query, retriever);

    const TokenCounter counter = [&lm](const std::string& s) { return lm.count_tokens(s); };
    const int max_tokens = cfg.prompt.max_tokens > 0
                               ? cfg.prompt.max_tokens
                               : (target.origin == TargetOrigin::function ? 256 : 50);

    const TruncatedParts base_parts =
        truncate_parts(task.left_context, task.right_context, "", cfg.prompt.budgets, counter,
                       cfg.prompt.comment_prefix);
    const std::string base_prompt =
        build_fim_prompt(base_parts.left, base_parts.right, "", cfg.prompt.tokens).text;

    const std::string cc_text = verbalize_cc(cc, cfg.prompt.comment_prefix);
    const TruncatedParts rag_parts =
        truncate_parts(task.left_context, task.right_context, cc_text, cfg.prompt.budgets,
                       counter, cfg.prompt.comment_prefix);
    const std::string rag_prompt =
        build_fim_prompt(rag_parts.left, rag_parts.right, rag_parts.cc, cfg.prompt.tokens).text;

    TrainingInstance instance;
    instance.id = task.task_id;
    instance.left_context = task.left_context;
    instance.right_context = task.right_context;
    instance.groundtruth = task.groundtruth;
    instance.cc = cc;
    instance.origin = target.origin;
    instance.hyp_base =
        lm.generate(base_prompt, max_tokens, GenerationMode::greedy_mode(), false).text;
    instance.hyp_rag =
        lm.generate(rag_prompt, max_tokens, GenerationMode::greedy_mode(), false).text;
    instance.es_base = edit_similarity(instance.hyp_base, task.groundtruth);
    instance.es_rag = edit_similarity(instance.hyp_rag, task.groundtruth);
    instance.label = instance.es_rag - instance.es_base > cfg.threshold;
    return instance;
}

int MaskedSequence::eval_position() const {
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == MaskKind::eval_target) return static_cast<int>(i);
    }
    return -1;
}

MaskedSequence build_masked_sequence(const TrainingInstance& instance,
                                     const SpecialTokens& tokens, double lambda,
                                     const std::string& comment_prefix) {
    const std::string cc_text = verbalize_cc(instance.cc, comment_prefix);
    const PromptBundle bundle =
        build_training_sequence(instance.left_context, instance.right_context,
                                instance.groundtruth, cc_text, instance.label, tokens);

    MaskedSequence seq;
    seq.lambda_weight = lambda;
    for (const auto& segment : bundle.segments) {
        const std::string text = bundle.text.substr(segment.begin, segment.end - segment.begin);
        const bool sentinel = segment.name == "fim_prefix" || segment.name == "fim_suffix" ||
                              segment.name == "fim_middle" || segment.name == "eof" ||
                              segment.name == "cc_token";
        if (sentinel) {
            // The self-assessment target is whatever follows eof: cc when the
            // instance is positive, fim_middle when it is negative.
            const bool eval = instance.label ? segment.name == "cc_token"
                                             : segment.name == "fim_middle";
            seq.tokens.push_back(text);
            seq.mask.push_back(eval ? MaskKind::eval_target : MaskKind::none);
            continue;
        }
        const MaskKind kind =
            segment.name == "groundtruth" ? MaskKind::gen_target : MaskKind::none;
        for (auto& token : fallback_tokens(text)) {
            seq.tokens.push_back(std::move(token));
            seq.mask.push_back(kind);
        }
    }
    return seq;
}

void emit_training_corpus(const std::vector<TrainingInstance>& instances,
                          const SpecialTokens& tokens, double lambda, std::ostream& out,
                          const std::string& comment_prefix) {
    for (const auto& instance : instances) {
        const MaskedSequence seq =
            build_masked_sequence(instance, tokens, lambda, comment_prefix);

        ordered_json record;
        record["tokens"] = seq.tokens;
        std::vector<std::string> mask;
        mask.reserve(seq.mask.size());
        for (const MaskKind kind : seq.mask) {
            mask.push_back(kind == MaskKind::eval_target ? "eval"
                           : kind == MaskKind::gen_target ? "gen"
                                                          : "none");
        }
        record["mask"] = mask;
        record["label"] = instance.label;

        ordered_json meta;
        meta["id"] = instance.id;
        meta["origin"] = instance.origin == TargetOrigin::chunk ? "chunk" : "function";
        meta["es_base"] = instance.es_base;
        meta["es_rag"] = instance.es_rag;
        meta["lambda"] = lambda;
        meta["x_l"] = instance.left_context;
        meta["x_r"] = instance.right_context;
        meta["y"] = instance.groundtruth;
        meta["cc"] = verbalize_cc(instance.cc, comment_prefix);
        meta["hyp_base"] = instance.hyp_base;
        meta["hyp_rag"] = instance.hyp_rag;
        record["meta"] = meta;

        out << record.dump() << '\n';
    }
}

Losses compute_losses(const MaskedSequence& seq, const std::vector<double>& token_logprobs,
                      double lambda) {
    if (token_logprobs.size() != seq.tokens.size()) {
        throw std::invalid_argument("compute_losses: logprobs misaligned with tokens (" +
                                    std::to_string(token_logprobs.size()) + " vs " +
                                    std::to_string(seq.tokens.size()) + ")");
    }
    const int eval_pos = seq.eval_position();
    if (eval_pos < 0) throw std::invalid_argument("sequence has no eval target");

    Losses losses;
    losses.l_eval = -token_logprobs[eval_pos];
    double gen_sum = 0.0;
    int gen_count = 0;
    for (std::size_t i = 0; i < seq.mask.size(); ++i) {
        if (seq.mask[i] == MaskKind::gen_target) {
            gen_sum -= token_logprobs[i];
            ++gen_count;
        }
    }
    losses.l_gen = gen_count > 0 ? gen_sum / gen_count : 0.0;
    losses.total = lambda * losses.l_eval + losses.l_gen;
    return losses;
}

}  // namespace selrag
