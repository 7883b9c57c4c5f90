#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cir/embedding_store.hpp"
#include "cir/retrieval.hpp"
#include "cir/triplet_forge.hpp"

namespace cir {

/// Separable desk-scale dataset. Each triplet draws a unit reference r, a
/// unit modification m and a log-uniform scale s in [scale_min, scale_max],
/// and sets t = normalize(r + s m + noise n) with n standard Gaussian per
/// coordinate. With a vocabulary, m is one of `vocabulary` fixed prototypes
/// and triplets sharing a prototype share one text embedding. The observed
/// text embedding is normalize(R m + text_bias mu) for a fixed random
/// rotation R and unit direction mu; `image_bias` shifts every reference
/// along a second fixed direction before normalization.
struct SyntheticConfig {
  std::size_t triplets = 1000;  // images = 2 * triplets
  std::size_t dim = 32;
  double noise = 0.1;
  double scale_min = 0.25;
  double scale_max = 8.0;
  double text_bias = 1.0;
  double image_bias = 0.0;
  bool rotate_text = true;
  std::size_t vocabulary = 8;  // 0: a fresh modification per triplet
  std::size_t train = 500;
  std::size_t val = 100;  // the remaining triplets form the test split
  std::size_t group_size = 6;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  EmbeddingMatrix images;  // refs then targets, normalized
  EmbeddingMatrix texts;   // keyed by modified text, normalized
  std::vector<Triplet> train;
  std::vector<EvalQuery> val;
  std::vector<EvalQuery> test;
  std::map<std::string, std::vector<std::string>> groups;
};

SyntheticDataset make_synthetic(const SyntheticConfig& cfg);

/// images.cire, texts.cire, train.jsonl, val.jsonl, test.jsonl, groups.jsonl
void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir);

}  // namespace cir
