#pragma once

// Glue between library types and the oracles: random model instances,
// conversions, and the library-side stage-one gradient.

#include <cmath>
#include <cstdint>
#include <vector>

#include "cir/contrastive.hpp"
#include "cir/dense.hpp"
#include "cir/fusion_model.hpp"
#include "cir/rng.hpp"
#include "oracles.hpp"

namespace fixture {

/// Every tensor random, Wt near identity so targets stay well conditioned.
inline cir::FusionParams random_params(cir::Rng& rng, std::size_t d, std::size_t h) {
  cir::FusionParams p = cir::FusionParams::initialize(d, h, rng.next());
  for (auto& x : p.tensors[cir::kB1]) x = static_cast<float>(0.3 * rng.normal());
  for (auto& x : p.tensors[cir::kB2]) x = static_cast<float>(0.3 * rng.normal());
  for (auto& x : p.tensors[cir::kWt]) x += static_cast<float>(0.3 * rng.normal());
  return p;
}

inline oracle::Params to_oracle(const cir::FusionParams& p) {
  oracle::Params o;
  o.d = p.dim;
  o.h = p.hidden;
  for (std::size_t t = 0; t < cir::kTensorCount; ++t) o.t[t].assign(p.tensors[t].begin(), p.tensors[t].end());
  return o;
}

inline oracle::Vec unit_vec(cir::Rng& rng, std::size_t d) {
  oracle::Vec v(d);
  for (double& x : v) x = rng.normal();
  return oracle::normalized(v);
}

/// Rounds to float so that library inputs and oracle inputs are identical.
inline std::vector<float> as_float(const oracle::Vec& v) { return {v.begin(), v.end()}; }
inline oracle::Vec as_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

inline oracle::Mat rows_of(const cir::DenseMatrix& m) {
  oracle::Mat out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
  return out;
}

inline cir::DenseMatrix dense_of(const oracle::Mat& rows) {
  cir::DenseMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < m.cols; ++k) m.at(i, k) = rows[i][k];
  }
  return m;
}

struct Batch {
  std::vector<std::vector<float>> r, m, t;

  oracle::Mat rd() const { return convert(r); }
  oracle::Mat md() const { return convert(m); }
  oracle::Mat td() const { return convert(t); }

 private:
  static oracle::Mat convert(const std::vector<std::vector<float>>& x) {
    oracle::Mat out;
    for (const auto& v : x) out.push_back(as_double(v));
    return out;
  }
};

inline Batch random_batch(cir::Rng& rng, std::size_t b, std::size_t d) {
  Batch out;
  for (std::size_t i = 0; i < b; ++i) {
    out.r.push_back(as_float(unit_vec(rng, d)));
    out.m.push_back(as_float(unit_vec(rng, d)));
    out.t.push_back(as_float(unit_vec(rng, d)));
  }
  return out;
}

/// Library gradient of the in-batch stage-one objective.
inline cir::FusionGradients library_gradient(const cir::FusionParams& p, const Batch& batch, double tau,
                                             double* loss = nullptr) {
  std::vector<cir::QueryTrace> qt;
  std::vector<cir::TargetTrace> tt;
  cir::DenseMatrix q(batch.r.size(), p.dim), g(batch.r.size(), p.dim);
  for (std::size_t i = 0; i < batch.r.size(); ++i) {
    qt.push_back(cir::encode_query(p, batch.r[i], batch.m[i]));
    tt.push_back(cir::encode_target(p, batch.t[i], false));
    for (std::size_t k = 0; k < p.dim; ++k) {
      q.at(i, k) = qt.back().query[k];
      g.at(i, k) = tt.back().target[k];
    }
  }
  cir::LossResult res = cir::loss_in_batch(q, g, tau);
  if (loss) *loss = res.loss;
  return cir::backward(p, qt, res.grad_queries, tt, res.grad_targets);
}

/// Smallest |a_k| over every pre-activation of the batch.
inline double min_abs_pre_activation(const oracle::Params& p, const Batch& batch) {
  double best = INFINITY;
  const oracle::Mat r = batch.rd(), m = batch.md();
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (double a : oracle::pre_activation(p, r[i], m[i])) best = std::min(best, std::abs(a));
  }
  return best;
}

/// Central difference of the oracle objective w.r.t. one parameter entry.
inline double numeric_partial(oracle::Params p, const Batch& batch, double tau, std::size_t tensor,
                              std::size_t index, double h) {
  const oracle::Mat r = batch.rd(), m = batch.md(), t = batch.td();
  const double base = p.t[tensor][index];
  p.t[tensor][index] = base + h;
  const double up = oracle::stage_one_objective(p, r, m, t, tau);
  p.t[tensor][index] = base - h;
  const double down = oracle::stage_one_objective(p, r, m, t, tau);
  return (up - down) / (2 * h);
}

/// max over entries |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double gradient_relative_error(const cir::FusionParams& p, const Batch& batch, double tau, double h = 1e-6,
                                      double floor = 1e-4) {
  const oracle::Params o = to_oracle(p);
  const cir::FusionGradients g = library_gradient(p, batch, tau);
  double worst = 0;
  for (std::size_t t = 0; t < cir::kTensorCount; ++t) {
    for (std::size_t i = 0; i < g.tensors[t].size(); ++i) {
      const double a = g.tensors[t][i];
      const double n = numeric_partial(o, batch, tau, t, i, h);
      const double scale = std::max({std::abs(a), std::abs(n), floor});
      worst = std::max(worst, std::abs(a - n) / scale);
    }
  }
  return worst;
}

}  // namespace fixture
