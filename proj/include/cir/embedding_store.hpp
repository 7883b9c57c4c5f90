#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cir {

/// Read-only row-major view of a dense f32 matrix.
struct MatrixView {
  std::span<const float> values;
  std::size_t rows = 0;
  std::size_t dim = 0;

  std::span<const float> row(std::size_t i) const { return values.subspan(i * dim, dim); }
};

/// Immutable N x d table of f32 vectors keyed by unique string ids.
///
/// Construction validates the invariants (unique ids, dim >= 1, finite
/// values, unit rows when `normalized`). Safe for concurrent reads.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                  bool normalized = false);

  std::size_t rows() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }
  bool empty() const noexcept { return ids_.empty(); }

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  MatrixView view() const noexcept { return {data_, rows(), dim_}; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Throws DataError naming the id when absent.
  std::size_t index_of(std::string_view id) const;

  /// Position of each row when ids are sorted ascending; the tie-break key
  /// for every ranking in the library.
  const std::vector<std::uint32_t>& id_order() const noexcept { return id_order_; }

 private:
  std::vector<std::string> ids_;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  bool normalized_ = false;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::uint32_t> id_order_;
};

// CIRE binary format, little-endian:
//   "CIRE" | u16 version=1 | u64 N | u32 dim | u8 dtype=1 (f32) | 9 zero bytes
//   N*dim f32 row-major
//   N x (u16 byte length, UTF-8 id bytes) in row order
inline constexpr std::uint16_t kCireVersion = 1;
inline constexpr std::size_t kCireHeaderSize = 28;

std::vector<std::byte> encode_embeddings(const EmbeddingMatrix& m);
/// Result has normalized=false regardless of the row norms.
EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes);

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);

/// Throws NumericError naming the first zero-norm row.
EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m);

/// Cosine scores for a contiguous range of query rows against a corpus.
struct SimilarityBlock {
  std::size_t first_row = 0;
  std::size_t row_count = 0;
  std::size_t corpus_size = 0;
  std::vector<double> scores;  // row_count x corpus_size
  std::optional<std::vector<std::uint32_t>> argsort;  // per row, best first

  std::span<const double> row(std::size_t i) const {
    return {scores.data() + i * corpus_size, corpus_size};
  }
  std::span<const std::uint32_t> order(std::size_t i) const {
    return {argsort->data() + i * corpus_size, corpus_size};
  }
};

/// True when (score_a, a) ranks strictly ahead of (score_b, b): higher score
/// first, ties by ascending id.
inline bool ranks_before(double score_a, std::uint32_t id_order_a, double score_b,
                         std::uint32_t id_order_b) noexcept {
  if (score_a != score_b) return score_a > score_b;
  return id_order_a < id_order_b;
}

/// Scores for queries[first, first + count). Queries and corpus must be unit
/// rows of equal dim; the corpus flag is checked, query rows are trusted.
SimilarityBlock score_block(MatrixView queries, std::size_t first, std::size_t count,
                            const EmbeddingMatrix& corpus);

/// Full q x N score matrix computed `chunk` query rows at a time.
SimilarityBlock cosine_scores(MatrixView queries, const EmbeddingMatrix& corpus, std::size_t chunk);

/// Streams blocks of at most `chunk` query rows; peak memory O(chunk x N).
template <typename Fn>
void for_each_block(MatrixView queries, const EmbeddingMatrix& corpus, std::size_t chunk, Fn&& fn) {
  for (std::size_t first = 0; first < queries.rows; first += chunk) {
    const std::size_t count = std::min(chunk, queries.rows - first);
    fn(score_block(queries, first, count, corpus));
  }
}

/// Fills `argsort` with each row's descending rank permutation.
void attach_argsort(SimilarityBlock& block, const EmbeddingMatrix& corpus);

}  // namespace cir
