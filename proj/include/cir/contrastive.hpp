#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cir/dense.hpp"
#include "cir/embedding_store.hpp"
#include "cir/fusion_model.hpp"
#include "cir/triplet_forge.hpp"

namespace cir {

struct LossResult {
  double loss = 0.0;
  DenseMatrix grad_queries;
  DenseMatrix grad_targets;  // empty when the target side is frozen
};

/// In-batch InfoNCE over cosine logits q_i . t_j / tau, positives on the
/// diagonal:  L = (1/B) sum_i -log softmax_j(q_i . t_j / tau)[i].
/// Rows must be unit vectors. Throws UsageError for tau <= 0 and
/// NumericError for non-finite logits.
LossResult loss_in_batch(const DenseMatrix& queries, const DenseMatrix& targets, double tau);

/// One scored (query, target) candidate of a planned example; indices refer
/// to the rows of the encoded query/target matrices.
struct CandidateIndex {
  std::size_t query = 0;
  std::size_t target = 0;
};

/// Softmax cross-entropy where example e scores its own candidate list and
/// candidates[e][0] is the positive. Generalizes loss_in_batch to the
/// replacement-based negative plans.
LossResult loss_candidates(const DenseMatrix& queries, const DenseMatrix& targets,
                           std::span<const std::vector<CandidateIndex>> candidates, double tau);

/// Frozen target-encoder outputs for every candidate image.
struct NegativeCache {
  EmbeddingMatrix corpus;   // normalized rows g(t_j)
  std::string fingerprint;  // target_fingerprint() of the encoder that built it
};

/// Encodes every corpus row with the frozen target projection.
NegativeCache cache_targets(const FusionParams& params, const EmbeddingMatrix& corpus);

/// Writes the cache as a CIRE file plus a "<path>.json" sidecar carrying the fingerprint.
void save_negative_cache(const NegativeCache& cache, const std::filesystem::path& path);
NegativeCache load_negative_cache(const std::filesystem::path& path);

inline constexpr std::size_t kCorpusChunk = 4096;

/// Full-corpus InfoNCE against cached targets:
///   L = (1/B) sum_i -log( exp(q_i . g_pos / tau) / sum_{j in pool} exp(q_i . g_j / tau) )
/// The sum runs over `pool` rows (all cache rows when empty) and includes the
/// positive. Streams the pool in chunks with a running log-sum-exp. Only
/// query gradients are returned.
LossResult loss_full_corpus(const DenseMatrix& queries, std::span<const std::size_t> positive_rows,
                            const NegativeCache& cache, double tau, std::span<const std::size_t> pool = {},
                            std::size_t chunk = kCorpusChunk);

/// Id-keyed variant that also rejects a cache built by a different target encoder.
LossResult loss_full_corpus(const DenseMatrix& queries, std::span<const std::string> target_ids,
                            const NegativeCache& cache, double tau, std::string_view expected_fingerprint,
                            std::size_t chunk = kCorpusChunk);

/// The four ways of turning a triplet (r, m, t) into negatives with another
/// triplet (r', m', t').
enum class NegativeMethod {
  ref_replace,     // (r', m, t)
  text_replace,    // (r, m', t)
  target_replace,  // (r, m, t')
  query_replace,   // (r', m', t)
};

const char* to_string(NegativeMethod m) noexcept;
/// Accepts the names above or their 1-based numbers "1".."4".
NegativeMethod parse_negative_method(std::string_view s);

struct PlannedExample {
  Triplet positive;
  std::vector<Triplet> negatives;  // B - 1 perturbed triplets
};

struct BatchPlan {
  NegativeMethod method = NegativeMethod::target_replace;
  std::vector<PlannedExample> examples;
};

/// Materializes B - 1 negatives per positive. When `pool` is the batch itself
/// the replacement sources are the other batch members; otherwise B - 1
/// distinct pool entries (different from the positive) are drawn with `seed`.
BatchPlan build_negative_batch(std::span<const Triplet> batch, NegativeMethod method, std::span<const Triplet> pool,
                               std::uint64_t seed);

}  // namespace cir
