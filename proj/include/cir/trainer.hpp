#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cir/contrastive.hpp"
#include "cir/embedding_store.hpp"
#include "cir/fusion_model.hpp"
#include "cir/retrieval.hpp"
#include "cir/triplet_forge.hpp"

namespace cir {

enum class Stage { one = 1, two = 2 };

struct ValidationSpec {
  Convention convention = Convention::fashioniq;
  std::vector<std::size_t> ks = {1, 5, 10, 50};
  std::vector<std::size_t> subset_ks;
  std::optional<bool> mask_reference;
};

struct TrainConfig {
  Stage stage = Stage::one;
  double tau = 0.05;
  double lr = 1e-3;
  double weight_decay = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t hidden = 0;  // 0: same as the embedding dim
  NegativeMethod neg_method = NegativeMethod::target_replace;
  std::uint64_t seed = 0;
  /// Stage two only: number of cache rows in each softmax denominator
  /// (positives always included). 0 means the whole cache.
  std::size_t neg_pool = 0;
  /// Keep the epoch with the best validation Rmean instead of the last one.
  bool select_best = true;

  /// Stage-dependent defaults: 50 epochs for stage one, 5 for stage two.
  static TrainConfig defaults(Stage stage);
};

/// Every violated constraint, so the CLI can report them all at once.
std::vector<std::string> validate_config(const TrainConfig& cfg);

struct TrainingData {
  const EmbeddingMatrix* images = nullptr;  // normalized; also the candidate corpus
  const EmbeddingMatrix* texts = nullptr;   // normalized; keyed by modified text
  std::vector<Triplet> triplets;
  std::vector<EvalQuery> validation;
  const Groups* groups = nullptr;
  ValidationSpec val;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> val_rmean;
  Stage stage = Stage::one;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> log;
  std::size_t selected_epoch = 0;  // 0 when the init checkpoint was returned
};

/// Runs epochs x ceil(examples / B) AdamW steps.
///
/// Stage one trains every tensor on the configured negative method with
/// in-batch sources. Stage two requires `init` and a cache built from its
/// target projection; it scores against the cache and never touches Wt.
/// Generated triplets sharing (ref, target) form one example whose rendering
/// is drawn uniformly at each step.
TrainResult train(const TrainConfig& cfg, const TrainingData& data, const Checkpoint* init,
                  const NegativeCache* cache);

}  // namespace cir
