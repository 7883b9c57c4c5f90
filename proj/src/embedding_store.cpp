#include "cir/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cir/error.hpp"
#include "cir/kernels.hpp"
#include "cir/parallel.hpp"

namespace cir {
namespace {

constexpr std::uint8_t kDtypeF32 = 1;
constexpr double kUnitTolerance = 1e-5;

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::byte>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::byte>(u & 0xff));
      if constexpr (sizeof(T) > 1) u = static_cast<U>(u >> 8);
    }
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void put_bytes(std::string_view s) {
    for (char c : s) out_.push_back(static_cast<std::byte>(c));
  }

 private:
  std::vector<std::byte>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float get_f32(const char* what) { return std::bit_cast<float>(get<std::uint32_t>(what)); }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(FormatFault::truncated, std::string("payload ends inside ") + what);
    }
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::vector<std::string> ids, std::size_t dim, std::vector<float> data,
                                 bool normalized)
    : ids_(std::move(ids)), dim_(dim), data_(std::move(data)), normalized_(normalized) {
  if (dim_ == 0) throw FormatError(FormatFault::bad_header, "embedding dim must be >= 1");
  if (data_.size() != ids_.size() * dim_) {
    throw FormatError(FormatFault::truncated, "data holds " + std::to_string(data_.size()) +
                                                  " values, expected " + std::to_string(ids_.size() * dim_));
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw FormatError(FormatFault::duplicate_id, "id \"" + ids_[i] + "\" appears more than once");
    }
  }
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    for (float v : row(i)) {
      if (!std::isfinite(v)) {
        throw FormatError(FormatFault::non_finite, "row \"" + ids_[i] + "\" contains NaN or Inf");
      }
    }
    if (normalized_) {
      const double norm = std::sqrt(kernels::dot(row(i), row(i)));
      if (std::abs(norm - 1.0) > kUnitTolerance) {
        throw DataError("row \"" + ids_[i] + "\" is flagged normalized but has norm " + std::to_string(norm));
      }
    }
  }
  std::vector<std::uint32_t> by_id(ids_.size());
  std::iota(by_id.begin(), by_id.end(), 0u);
  std::sort(by_id.begin(), by_id.end(), [&](std::uint32_t a, std::uint32_t b) { return ids_[a] < ids_[b]; });
  id_order_.resize(ids_.size());
  for (std::uint32_t pos = 0; pos < by_id.size(); ++pos) id_order_[by_id[pos]] = pos;
}

std::optional<std::size_t> EmbeddingMatrix::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingMatrix::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw DataError("unknown id \"" + std::string(id) + "\"");
}

std::vector<std::byte> encode_embeddings(const EmbeddingMatrix& m) {
  std::vector<std::byte> out;
  out.reserve(kCireHeaderSize + m.data().size() * 4 + m.rows() * 16);
  ByteWriter w(out);
  w.put_bytes("CIRE");
  w.put(kCireVersion);
  w.put(static_cast<std::uint64_t>(m.rows()));
  w.put(static_cast<std::uint32_t>(m.dim()));
  w.put(kDtypeF32);
  for (int i = 0; i < 9; ++i) w.put(std::uint8_t{0});
  for (float v : m.data()) w.put_f32(v);
  for (const auto& id : m.ids()) {
    if (id.size() > 0xffff) throw DataError("id longer than 65535 bytes: " + id.substr(0, 32) + "...");
    w.put(static_cast<std::uint16_t>(id.size()));
    w.put_bytes(id);
  }
  return out;
}

EmbeddingMatrix decode_embeddings(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw FormatError(FormatFault::truncated, "file is shorter than the magic");
  if (std::memcmp(bytes.data(), "CIRE", 4) != 0) {
    throw FormatError(FormatFault::bad_magic, "file does not start with \"CIRE\"");
  }
  ByteReader r(bytes.subspan(4));
  const auto version = r.get<std::uint16_t>("header");
  if (version != kCireVersion) {
    throw FormatError(FormatFault::version_mismatch,
                      "version " + std::to_string(version) + ", expected " + std::to_string(kCireVersion));
  }
  const auto n = r.get<std::uint64_t>("header");
  const auto dim = r.get<std::uint32_t>("header");
  const auto dtype = r.get<std::uint8_t>("header");
  if (dtype != kDtypeF32) throw FormatError(FormatFault::bad_header, "dtype " + std::to_string(dtype));
  for (int i = 0; i < 9; ++i) {
    if (r.get<std::uint8_t>("header") != 0) throw FormatError(FormatFault::bad_header, "reserved bytes not zero");
  }
  if (dim == 0) throw FormatError(FormatFault::bad_header, "dim is 0");
  if (n > r.remaining() / 4 / dim) {
    throw FormatError(FormatFault::truncated, "header declares " + std::to_string(n) + " rows of dim " +
                                                  std::to_string(dim) + " but the payload is shorter");
  }
  std::vector<float> data(static_cast<std::size_t>(n) * dim);
  for (float& v : data) v = r.get_f32("row data");
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint16_t>("id table");
    ids.push_back(r.get_string(len, "id table"));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatFault::bad_header, std::to_string(r.remaining()) + " trailing bytes after id table");
  }
  return EmbeddingMatrix(std::move(ids), dim, std::move(data), false);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatFault::io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_embeddings(std::as_bytes(std::span(raw)));
  } catch (const FormatError& e) {
    throw FormatError(e.fault(), path.string() + ": " + e.what());
  }
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatFault::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatFault::io, "write failed: " + path.string());
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  std::vector<float> data(m.data().begin(), m.data().end());
  const std::size_t d = m.dim();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double norm = std::sqrt(kernels::dot(m.row(i), m.row(i)));
    if (!(norm > 0.0)) throw NumericError("row \"" + m.id(i) + "\" has zero norm");
    for (std::size_t k = 0; k < d; ++k) {
      data[i * d + k] = static_cast<float>(static_cast<double>(data[i * d + k]) / norm);
    }
  }
  return EmbeddingMatrix(m.ids(), d, std::move(data), true);
}

SimilarityBlock score_block(MatrixView queries, std::size_t first, std::size_t count,
                            const EmbeddingMatrix& corpus) {
  if (queries.dim != corpus.dim()) {
    throw DataError("dim mismatch: queries have " + std::to_string(queries.dim) + ", corpus has " +
                    std::to_string(corpus.dim()));
  }
  if (!corpus.normalized()) throw DataError("corpus must be normalized before scoring");
  if (first + count > queries.rows) throw UsageError("query range out of bounds");
  SimilarityBlock block;
  block.first_row = first;
  block.row_count = count;
  block.corpus_size = corpus.rows();
  block.scores.resize(count * corpus.rows());
  const auto& k = kernels::active();
  parallel_for(count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const float* q = queries.row(first + i).data();
      double* out = block.scores.data() + i * corpus.rows();
      for (std::size_t j = 0; j < corpus.rows(); ++j) {
        out[j] = k.dot_f32(q, corpus.row(j).data(), corpus.dim());
      }
    }
  });
  return block;
}

SimilarityBlock cosine_scores(MatrixView queries, const EmbeddingMatrix& corpus, std::size_t chunk) {
  if (chunk == 0) throw UsageError("chunk must be positive");
  SimilarityBlock all;
  all.first_row = 0;
  all.row_count = queries.rows;
  all.corpus_size = corpus.rows();
  all.scores.reserve(queries.rows * corpus.rows());
  for_each_block(queries, corpus, chunk, [&](const SimilarityBlock& b) {
    all.scores.insert(all.scores.end(), b.scores.begin(), b.scores.end());
  });
  if (queries.rows == 0 && queries.dim != corpus.dim()) {
    throw DataError("dim mismatch between queries and corpus");
  }
  return all;
}

void attach_argsort(SimilarityBlock& block, const EmbeddingMatrix& corpus) {
  const auto& key = corpus.id_order();
  const std::size_t n = block.corpus_size;
  std::vector<std::uint32_t> perm(block.row_count * n);
  parallel_for(block.row_count, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto row = block.row(i);
      auto out = perm.begin() + static_cast<std::ptrdiff_t>(i * n);
      std::iota(out, out + static_cast<std::ptrdiff_t>(n), 0u);
      std::sort(out, out + static_cast<std::ptrdiff_t>(n), [&](std::uint32_t a, std::uint32_t b) {
        return ranks_before(row[a], key[a], row[b], key[b]);
      });
    }
  });
  block.argsort = std::move(perm);
}

}  // namespace cir
