#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cir/caption.hpp"
#include "cir/embedding_store.hpp"

namespace cir {

/// Similarity-rank window [c0, c1) for target sampling. Rank 0 is the most
/// similar other image; the reference itself is never ranked.
struct PairMatchConfig {
  std::size_t c0 = 0;
  std::size_t c1 = 1;
  std::uint64_t seed = 0;
};

struct RankWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

/// Clamps [c0, c1) to the N-1 ranks available per reference. Throws
/// UsageError when c0 >= c1 or the clamped window is empty.
RankWindow clamp_window(const PairMatchConfig& cfg, std::size_t n);

/// Config whose window covers fractions [f0, f1) of the available ranks.
PairMatchConfig fractional_config(double f0, double f1, std::size_t n, std::uint64_t seed);

struct ImagePair {
  std::string ref_id;
  std::string target_id;
  bool operator==(const ImagePair&) const = default;
};

/// One pair per image: the target is drawn uniformly from the images whose
/// descending-similarity rank lies in the clamped window. Each reference row
/// uses its own RNG stream, so the result is independent of `chunk` and of
/// thread count.
std::vector<ImagePair> match_pairs(const EmbeddingMatrix& embeddings, const PairMatchConfig& cfg,
                                   std::size_t chunk = 256);

struct Quadruplet {
  std::string ref_id;
  std::string ref_caption;
  std::string target_id;
  std::string target_caption;
};

/// Joins pairs with their captions. Throws DataError for a missing caption.
std::vector<Quadruplet> build_quadruplets(std::span<const ImagePair> pairs,
                                          std::span<const CaptionRecord> captions);

inline constexpr int kTemplateCount = 3;

/// 0: "{target} instead of {ref}"   1: "Unlike {ref}, I want {target}"   2: "{target}"
std::string render_modified_text(const Quadruplet& q, int template_id);

enum class Provenance { annotated, generated };

const char* to_string(Provenance p) noexcept;

struct Triplet {
  std::string ref_id;
  std::string modified_text;
  std::string target_id;
  Provenance provenance = Provenance::annotated;
  std::optional<int> template_id;  // set iff generated

  bool operator==(const Triplet&) const = default;
};

/// Samples `budget` quadruplets without replacement and renders every
/// template in `templates` for each; output size is budget * |templates|,
/// ordered by quadruplet index then template id.
std::vector<Triplet> forge_triplets(std::span<const Quadruplet> quads, std::span<const int> templates,
                                    std::size_t budget, std::uint64_t seed);

/// Throws DataError on violated triplet invariants.
void validate_triplet(const Triplet& t);

void write_pairs(const std::filesystem::path& path, std::span<const ImagePair> pairs);
std::vector<ImagePair> read_pairs(const std::filesystem::path& path);

void write_triplets(const std::filesystem::path& path, std::span<const Triplet> triplets);
std::vector<Triplet> read_triplets(const std::filesystem::path& path);

}  // namespace cir
