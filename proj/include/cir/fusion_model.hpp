#pragma once

// Query fusion head F and target projection G over precomputed embeddings.
//
//   a = W1 [r; m] + b1          (h)
//   u = W2 relu(a) + b2 + r + m (d)
//   q = u / |u|
//   v = Wt t,  g = v / |v|
//
// With W1 = W2 = 0 and Wt = I the model reduces to normalized sum fusion.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cir/dense.hpp"

namespace cir {

enum TensorId : std::size_t { kW1 = 0, kB1 = 1, kW2 = 2, kB2 = 3, kWt = 4 };
inline constexpr std::size_t kTensorCount = 5;
inline constexpr std::array<const char*, kTensorCount> kTensorNames = {"W1", "b1", "W2", "b2", "Wt"};

struct FusionParams {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  // W1: h x 2d, b1: h, W2: d x h, b2: d, Wt: d x d; all row-major.
  std::array<std::vector<float>, kTensorCount> tensors;

  /// W1, W2 ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); b1 = b2 = 0; Wt = I.
  static FusionParams initialize(std::size_t dim, std::size_t hidden, std::uint64_t seed);
  /// All-zero fusion weights with Wt = I.
  static FusionParams sum_fusion(std::size_t dim, std::size_t hidden);

  std::size_t expected_size(std::size_t tensor) const;
  /// Throws DataError on inconsistent shapes or non-finite entries.
  void validate() const;

  std::span<const float> w1() const { return tensors[kW1]; }
  std::span<const float> b1() const { return tensors[kB1]; }
  std::span<const float> w2() const { return tensors[kW2]; }
  std::span<const float> b2() const { return tensors[kB2]; }
  std::span<const float> wt() const { return tensors[kWt]; }
};

/// Activations kept from encode_query for the backward pass.
struct QueryTrace {
  std::vector<double> input;           // [r; m], 2d
  std::vector<double> pre_activation;  // a, h
  std::vector<double> hidden;          // relu(a), h
  std::vector<double> pre_norm;        // u, d
  std::vector<double> query;           // q, d
  double norm = 0.0;                   // |u|
};

struct TargetTrace {
  std::vector<double> input;     // t, d
  std::vector<double> pre_norm;  // v, d
  std::vector<double> target;    // g, d
  double norm = 0.0;
  bool frozen = false;
};

inline constexpr double kMinPreNorm = 1e-8;

/// Throws NumericError when |u| < 1e-8.
QueryTrace encode_query(const FusionParams& p, std::span<const float> reference, std::span<const float> text);

/// Throws NumericError when |v| < 1e-8. A frozen trace must not be passed to backward().
TargetTrace encode_target(const FusionParams& p, std::span<const float> target, bool frozen);

struct FusionGradients {
  std::array<std::vector<double>, kTensorCount> tensors;
  bool has_target = false;

  static FusionGradients zeros(const FusionParams& p);
};

/// Exact gradients of a loss whose upstream gradients w.r.t. each encoded
/// query row (dq) and target row (dv) are given. Contributions are summed in
/// example order. Pass empty target spans to leave Wt's gradient absent.
FusionGradients backward(const FusionParams& p, std::span<const QueryTrace> queries, const DenseMatrix& dq,
                         std::span<const TargetTrace> targets, const DenseMatrix& dv);

/// Adds one query example into `grads`.
void accumulate_query_gradient(const FusionParams& p, const QueryTrace& trace, std::span<const double> dq,
                               FusionGradients& grads);
void accumulate_target_gradient(const FusionParams& p, const TargetTrace& trace, std::span<const double> dv,
                                FusionGradients& grads);

struct OptimizerState {
  std::array<std::vector<float>, kTensorCount> first_moment;
  std::array<std::vector<float>, kTensorCount> second_moment;
  std::uint64_t step = 0;

  static OptimizerState zeros(const FusionParams& p);
};

struct Checkpoint {
  FusionParams params;
  OptimizerState optimizer;
};

// CIRM checkpoint, little-endian:
//   "CIRM" | u16 version=1 | u32 d | u32 h
//   W1 b1 W2 b2 Wt (f32) | first moments, same order | second moments, same order | u64 step
std::vector<std::byte> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// SHA-256 over the little-endian bytes of Wt; identifies a frozen target encoder.
std::string target_fingerprint(const FusionParams& p);

}  // namespace cir
