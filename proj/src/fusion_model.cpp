#include "cir/fusion_model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cir/error.hpp"
#include "cir/hash.hpp"
#include "cir/rng.hpp"

namespace cir {
namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void put_floats(std::vector<std::byte>& out, std::span<const float> values) {
  for (float f : values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

struct Cursor {
  std::span<const std::byte> in;
  std::size_t pos = 0;

  std::uint64_t get(std::size_t width, const char* what) {
    if (in.size() - pos < width) throw FormatError(FormatFault::truncated, std::string("checkpoint ends inside ") + what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += width;
    return v;
  }
  void floats(std::vector<float>& out, std::size_t n, const char* what) {
    out.resize(n);
    for (auto& f : out) f = std::bit_cast<float>(static_cast<std::uint32_t>(get(4, what)));
  }
};

}  // namespace

FusionParams FusionParams::sum_fusion(std::size_t dim, std::size_t hidden) {
  if (dim == 0 || hidden == 0) throw UsageError("model dims must be positive");
  FusionParams p;
  p.dim = dim;
  p.hidden = hidden;
  for (std::size_t t = 0; t < kTensorCount; ++t) p.tensors[t].assign(p.expected_size(t), 0.0f);
  for (std::size_t i = 0; i < dim; ++i) p.tensors[kWt][i * dim + i] = 1.0f;
  return p;
}

FusionParams FusionParams::initialize(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  FusionParams p = sum_fusion(dim, hidden);
  Rng rng(seed);
  const auto fill = [&](std::vector<float>& w, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& x : w) x = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  };
  fill(p.tensors[kW1], 2 * dim);
  fill(p.tensors[kW2], hidden);
  return p;
}

std::size_t FusionParams::expected_size(std::size_t tensor) const {
  switch (tensor) {
    case kW1: return hidden * 2 * dim;
    case kB1: return hidden;
    case kW2: return dim * hidden;
    case kB2: return dim;
    case kWt: return dim * dim;
  }
  return 0;
}

void FusionParams::validate() const {
  if (dim == 0 || hidden == 0) throw DataError("model dims must be positive");
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    if (tensors[t].size() != expected_size(t)) {
      throw DataError(std::string("tensor ") + kTensorNames[t] + " has " + std::to_string(tensors[t].size()) +
                      " entries, expected " + std::to_string(expected_size(t)));
    }
    for (float x : tensors[t]) {
      if (!std::isfinite(x)) throw NumericError(std::string("tensor ") + kTensorNames[t] + " is not finite");
    }
  }
}

QueryTrace encode_query(const FusionParams& p, std::span<const float> reference, std::span<const float> text) {
  const std::size_t d = p.dim, h = p.hidden;
  if (reference.size() != d || text.size() != d) throw DataError("query input dim mismatch");
  QueryTrace tr;
  tr.input.resize(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    tr.input[i] = reference[i];
    tr.input[d + i] = text[i];
  }
  tr.pre_activation.resize(h);
  tr.hidden.resize(h);
  const float* w1 = p.tensors[kW1].data();
  for (std::size_t k = 0; k < h; ++k) {
    double a = p.tensors[kB1][k];
    const float* wrow = w1 + k * 2 * d;
    for (std::size_t j = 0; j < 2 * d; ++j) a += static_cast<double>(wrow[j]) * tr.input[j];
    tr.pre_activation[k] = a;
    tr.hidden[k] = a > 0.0 ? a : 0.0;
  }
  tr.pre_norm.resize(d);
  const float* w2 = p.tensors[kW2].data();
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double u = static_cast<double>(p.tensors[kB2][i]) + tr.input[i] + tr.input[d + i];
    const float* wrow = w2 + i * h;
    for (std::size_t k = 0; k < h; ++k) u += static_cast<double>(wrow[k]) * tr.hidden[k];
    tr.pre_norm[i] = u;
    sq += u * u;
  }
  tr.norm = std::sqrt(sq);
  if (!(tr.norm >= kMinPreNorm)) throw NumericError("degenerate query: |u| = " + std::to_string(tr.norm));
  tr.query.resize(d);
  for (std::size_t i = 0; i < d; ++i) tr.query[i] = tr.pre_norm[i] / tr.norm;
  return tr;
}

TargetTrace encode_target(const FusionParams& p, std::span<const float> target, bool frozen) {
  const std::size_t d = p.dim;
  if (target.size() != d) throw DataError("target input dim mismatch");
  TargetTrace tr;
  tr.frozen = frozen;
  tr.input.assign(target.begin(), target.end());
  tr.pre_norm.resize(d);
  const float* wt = p.tensors[kWt].data();
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += static_cast<double>(wt[i * d + j]) * tr.input[j];
    tr.pre_norm[i] = v;
    sq += v * v;
  }
  tr.norm = std::sqrt(sq);
  if (!(tr.norm >= kMinPreNorm)) throw NumericError("degenerate target: |v| = " + std::to_string(tr.norm));
  tr.target.resize(d);
  for (std::size_t i = 0; i < d; ++i) tr.target[i] = tr.pre_norm[i] / tr.norm;
  return tr;
}

FusionGradients FusionGradients::zeros(const FusionParams& p) {
  FusionGradients g;
  for (std::size_t t = 0; t < kTensorCount; ++t) g.tensors[t].assign(p.expected_size(t), 0.0);
  return g;
}

namespace {

// d(x/|x|)/dx applied to upstream g: (g - (g.y) y) / |x| where y = x/|x|.
void normalize_backward(std::span<const double> y, double norm, std::span<const double> g, std::vector<double>& out) {
  double gy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
  out.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (g[i] - gy * y[i]) / norm;
}

}  // namespace

void accumulate_query_gradient(const FusionParams& p, const QueryTrace& tr, std::span<const double> dq,
                               FusionGradients& grads) {
  const std::size_t d = p.dim, h = p.hidden;
  std::vector<double> du;
  normalize_backward(tr.query, tr.norm, dq, du);

  auto& gw2 = grads.tensors[kW2];
  auto& gb2 = grads.tensors[kB2];
  std::vector<double> dh(h, 0.0);
  const float* w2 = p.tensors[kW2].data();
  for (std::size_t i = 0; i < d; ++i) {
    gb2[i] += du[i];
    double* grow = gw2.data() + i * h;
    const float* wrow = w2 + i * h;
    for (std::size_t k = 0; k < h; ++k) {
      grow[k] += du[i] * tr.hidden[k];
      dh[k] += static_cast<double>(wrow[k]) * du[i];
    }
  }
  auto& gw1 = grads.tensors[kW1];
  auto& gb1 = grads.tensors[kB1];
  for (std::size_t k = 0; k < h; ++k) {
    if (!(tr.pre_activation[k] > 0.0)) continue;
    gb1[k] += dh[k];
    double* grow = gw1.data() + k * 2 * d;
    for (std::size_t j = 0; j < 2 * d; ++j) grow[j] += dh[k] * tr.input[j];
  }
}

void accumulate_target_gradient(const FusionParams& p, const TargetTrace& tr, std::span<const double> dv,
                                FusionGradients& grads) {
  if (tr.frozen) throw UsageError("gradient routed into a frozen target encoder");
  const std::size_t d = p.dim;
  std::vector<double> dpre;
  normalize_backward(tr.target, tr.norm, dv, dpre);
  auto& gwt = grads.tensors[kWt];
  for (std::size_t i = 0; i < d; ++i) {
    double* grow = gwt.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) grow[j] += dpre[i] * tr.input[j];
  }
  grads.has_target = true;
}

FusionGradients backward(const FusionParams& p, std::span<const QueryTrace> queries, const DenseMatrix& dq,
                         std::span<const TargetTrace> targets, const DenseMatrix& dv) {
  if (dq.rows != queries.size() || (!queries.empty() && dq.cols != p.dim)) {
    throw UsageError("backward: query gradient shape does not match the traces");
  }
  if (dv.rows != targets.size() || (!targets.empty() && dv.cols != p.dim)) {
    throw UsageError("backward: target gradient shape does not match the traces");
  }
  FusionGradients g = FusionGradients::zeros(p);
  for (std::size_t i = 0; i < queries.size(); ++i) accumulate_query_gradient(p, queries[i], dq.row(i), g);
  for (std::size_t i = 0; i < targets.size(); ++i) accumulate_target_gradient(p, targets[i], dv.row(i), g);
  return g;
}

OptimizerState OptimizerState::zeros(const FusionParams& p) {
  OptimizerState s;
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    s.first_moment[t].assign(p.expected_size(t), 0.0f);
    s.second_moment[t].assign(p.expected_size(t), 0.0f);
  }
  return s;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& c) {
  c.params.validate();
  std::vector<std::byte> out;
  for (char ch : std::string_view("CIRM")) out.push_back(static_cast<std::byte>(ch));
  out.push_back(std::byte{1});
  out.push_back(std::byte{0});
  put_u32(out, static_cast<std::uint32_t>(c.params.dim));
  put_u32(out, static_cast<std::uint32_t>(c.params.hidden));
  for (const auto& t : c.params.tensors) put_floats(out, t);
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    if (c.optimizer.first_moment[t].size() != c.params.expected_size(t) ||
        c.optimizer.second_moment[t].size() != c.params.expected_size(t)) {
      throw DataError(std::string("optimizer moment shape mismatch for ") + kTensorNames[t]);
    }
  }
  for (const auto& t : c.optimizer.first_moment) put_floats(out, t);
  for (const auto& t : c.optimizer.second_moment) put_floats(out, t);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((c.optimizer.step >> (8 * i)) & 0xff));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < 4) throw FormatError(FormatFault::truncated, "file is shorter than the magic");
  if (std::memcmp(bytes.data(), "CIRM", 4) != 0) {
    throw FormatError(FormatFault::bad_magic, "file does not start with \"CIRM\"");
  }
  Cursor cur{bytes, 4};
  const auto version = cur.get(2, "header");
  if (version != 1) throw FormatError(FormatFault::version_mismatch, "checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.params.dim = cur.get(4, "header");
  c.params.hidden = cur.get(4, "header");
  if (c.params.dim == 0 || c.params.hidden == 0) throw FormatError(FormatFault::bad_header, "zero model dims");
  std::size_t total = 0;
  for (std::size_t t = 0; t < kTensorCount; ++t) total += c.params.expected_size(t);
  if ((bytes.size() - cur.pos) != total * 12 + 8) {
    throw FormatError(FormatFault::truncated, "checkpoint payload size does not match d=" +
                                                  std::to_string(c.params.dim) + ", h=" + std::to_string(c.params.hidden));
  }
  for (std::size_t t = 0; t < kTensorCount; ++t) cur.floats(c.params.tensors[t], c.params.expected_size(t), "parameters");
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    cur.floats(c.optimizer.first_moment[t], c.params.expected_size(t), "moments");
  }
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    cur.floats(c.optimizer.second_moment[t], c.params.expected_size(t), "moments");
  }
  c.optimizer.step = cur.get(8, "step counter");
  c.params.validate();
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatFault::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatFault::io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(std::as_bytes(std::span(raw)));
  } catch (const FormatError& e) {
    throw FormatError(e.fault(), path.string() + ": " + e.what());
  }
}

std::string target_fingerprint(const FusionParams& p) {
  std::vector<std::byte> bytes;
  put_floats(bytes, p.wt());
  return sha256_hex(std::span<const std::byte>(bytes));
}

}  // namespace cir
