#include "cir/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cir/error.hpp"
#include "cir/jsonl.hpp"
#include "cir/kernels.hpp"
#include "cir/parallel.hpp"
#include "cir/rng.hpp"

namespace cir {
namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw UsageError("temperature must be positive, got " + std::to_string(tau));
}

double row_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace

LossResult loss_in_batch(const DenseMatrix& queries, const DenseMatrix& targets, double tau) {
  check_tau(tau);
  if (queries.rows != targets.rows || queries.cols != targets.cols) {
    throw DataError("in-batch loss needs matching query/target shapes");
  }
  const std::size_t b = queries.rows;
  std::vector<std::vector<CandidateIndex>> cands(b);
  for (std::size_t i = 0; i < b; ++i) {
    cands[i].reserve(b);
    cands[i].push_back({i, i});
    for (std::size_t j = 0; j < b; ++j) {
      if (j != i) cands[i].push_back({i, j});
    }
  }
  return loss_candidates(queries, targets, cands, tau);
}

LossResult loss_candidates(const DenseMatrix& queries, const DenseMatrix& targets,
                           std::span<const std::vector<CandidateIndex>> candidates, double tau) {
  check_tau(tau);
  if (queries.cols != targets.cols) throw DataError("query/target dim mismatch");
  LossResult out;
  out.grad_queries = DenseMatrix(queries.rows, queries.cols);
  out.grad_targets = DenseMatrix(targets.rows, targets.cols);
  if (candidates.empty()) return out;
  const double inv_batch = 1.0 / static_cast<double>(candidates.size());
  double total = 0.0;
  std::vector<double> logits;
  for (const auto& list : candidates) {
    if (list.empty()) throw DataError("planned example without candidates");
    logits.resize(list.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < list.size(); ++c) {
      if (list[c].query >= queries.rows || list[c].target >= targets.rows) {
        throw DataError("candidate index out of range");
      }
      logits[c] = row_dot(queries.row(list[c].query), targets.row(list[c].target)) / tau;
      check_finite(logits[c], "logit");
      max_logit = std::max(max_logit, logits[c]);
    }
    double sum = 0.0;
    for (double l : logits) sum += std::exp(l - max_logit);
    const double lse = max_logit + std::log(sum);
    total += lse - logits[0];
    for (std::size_t c = 0; c < list.size(); ++c) {
      const double p = std::exp(logits[c] - lse);
      const double dlogit = (p - (c == 0 ? 1.0 : 0.0)) * inv_batch / tau;
      if (dlogit == 0.0) continue;
      auto gq = out.grad_queries.row(list[c].query);
      auto gt = out.grad_targets.row(list[c].target);
      const auto q = queries.row(list[c].query);
      const auto t = targets.row(list[c].target);
      for (std::size_t k = 0; k < q.size(); ++k) {
        gq[k] += dlogit * t[k];
        gt[k] += dlogit * q[k];
      }
    }
  }
  out.loss = total * inv_batch;
  check_finite(out.loss, "loss");
  return out;
}

NegativeCache cache_targets(const FusionParams& params, const EmbeddingMatrix& corpus) {
  if (!corpus.normalized()) throw DataError("negative cache needs a normalized corpus");
  if (corpus.dim() != params.dim) throw DataError("corpus dim does not match the model");
  const std::size_t d = params.dim;
  std::vector<float> rows(corpus.rows() * d);
  parallel_for(corpus.rows(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      TargetTrace tr;
      try {
        tr = encode_target(params, corpus.row(i), /*frozen=*/true);
      } catch (const NumericError& e) {
        throw NumericError("caching \"" + corpus.id(i) + "\": " + e.what());
      }
      for (std::size_t k = 0; k < d; ++k) rows[i * d + k] = static_cast<float>(tr.target[k]);
    }
  });
  return NegativeCache{EmbeddingMatrix(corpus.ids(), d, std::move(rows), true), target_fingerprint(params)};
}

void save_negative_cache(const NegativeCache& cache, const std::filesystem::path& path) {
  write_embeddings(cache.corpus, path);
  write_json_file(path.string() + ".json", json{{"fingerprint", cache.fingerprint},
                                                {"rows", cache.corpus.rows()},
                                                {"dim", cache.corpus.dim()}});
}

NegativeCache load_negative_cache(const std::filesystem::path& path) {
  const json meta = read_json_file(path.string() + ".json");
  NegativeCache c;
  c.corpus = normalize_rows(load_embeddings(path));
  c.fingerprint = require_string(meta, "fingerprint");
  if (meta.value("rows", std::size_t{0}) != c.corpus.rows()) {
    throw DataError("cache sidecar row count does not match " + path.string());
  }
  return c;
}

LossResult loss_full_corpus(const DenseMatrix& queries, std::span<const std::size_t> positive_rows,
                            const NegativeCache& cache, double tau, std::span<const std::size_t> pool,
                            std::size_t chunk) {
  check_tau(tau);
  const EmbeddingMatrix& corpus = cache.corpus;
  if (queries.cols != corpus.dim()) throw DataError("query dim does not match the cache");
  if (positive_rows.size() != queries.rows) throw DataError("one positive row per query is required");
  if (chunk == 0) throw UsageError("chunk must be positive");
  for (std::size_t r : positive_rows) {
    if (r >= corpus.rows()) throw DataError("positive row out of range");
  }
  const std::size_t n = pool.empty() ? corpus.rows() : pool.size();
  const auto row_at = [&](std::size_t j) { return pool.empty() ? j : pool[j]; };
  const std::size_t b = queries.rows;
  const std::size_t d = queries.cols;

  LossResult out;
  out.grad_queries = DenseMatrix(b, d);
  std::vector<double> per_query(b, 0.0);
  const auto& k = kernels::active();

  parallel_for(b, [&](std::size_t begin, std::size_t end) {
    std::vector<double> logits(std::min(chunk, n));
    std::vector<double> weighted(d);
    for (std::size_t i = begin; i < end; ++i) {
      const auto q = queries.row(i);
      double running_max = -std::numeric_limits<double>::infinity();
      double running_sum = 0.0;
      std::fill(weighted.begin(), weighted.end(), 0.0);
      for (std::size_t first = 0; first < n; first += chunk) {
        const std::size_t count = std::min(chunk, n - first);
        double chunk_max = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < count; ++c) {
          logits[c] = k.dot_f64_f32(q.data(), corpus.row(row_at(first + c)).data(), d) / tau;
          chunk_max = std::max(chunk_max, logits[c]);
        }
        if (!std::isfinite(chunk_max)) throw NumericError("non-finite logit against the negative cache");
        if (chunk_max > running_max) {
          const double rescale = std::exp(running_max - chunk_max);
          running_sum *= rescale;
          for (double& w : weighted) w *= rescale;
          running_max = chunk_max;
        }
        for (std::size_t c = 0; c < count; ++c) {
          const double e = std::exp(logits[c] - running_max);
          running_sum += e;
          k.axpy_f32_f64(e, corpus.row(row_at(first + c)).data(), weighted.data(), d);
        }
      }
      const auto pos = corpus.row(positive_rows[i]);
      const double pos_logit = k.dot_f64_f32(q.data(), pos.data(), d) / tau;
      per_query[i] = running_max + std::log(running_sum) - pos_logit;
      auto g = out.grad_queries.row(i);
      const double scale = 1.0 / (static_cast<double>(b) * tau);
      for (std::size_t c = 0; c < d; ++c) {
        g[c] = (weighted[c] / running_sum - static_cast<double>(pos[c])) * scale;
      }
    }
  });
  double total = 0.0;
  for (double l : per_query) total += l;
  out.loss = b == 0 ? 0.0 : total / static_cast<double>(b);
  check_finite(out.loss, "loss");
  return out;
}

LossResult loss_full_corpus(const DenseMatrix& queries, std::span<const std::string> target_ids,
                            const NegativeCache& cache, double tau, std::string_view expected_fingerprint,
                            std::size_t chunk) {
  if (cache.fingerprint != expected_fingerprint) {
    throw DataError("negative cache fingerprint " + cache.fingerprint.substr(0, 12) +
                    " is stale for target encoder " + std::string(expected_fingerprint.substr(0, 12)));
  }
  std::vector<std::size_t> rows;
  rows.reserve(target_ids.size());
  for (const auto& id : target_ids) {
    auto r = cache.corpus.find(id);
    if (!r) throw DataError("target \"" + id + "\" is not in the negative cache");
    rows.push_back(*r);
  }
  return loss_full_corpus(queries, rows, cache, tau, {}, chunk);
}

const char* to_string(NegativeMethod m) noexcept {
  switch (m) {
    case NegativeMethod::ref_replace: return "ref_replace";
    case NegativeMethod::text_replace: return "text_replace";
    case NegativeMethod::target_replace: return "target_replace";
    case NegativeMethod::query_replace: return "query_replace";
  }
  return "unknown";
}

NegativeMethod parse_negative_method(std::string_view s) {
  if (s == "ref_replace" || s == "1") return NegativeMethod::ref_replace;
  if (s == "text_replace" || s == "2") return NegativeMethod::text_replace;
  if (s == "target_replace" || s == "3") return NegativeMethod::target_replace;
  if (s == "query_replace" || s == "4") return NegativeMethod::query_replace;
  throw UsageError("unknown negative method \"" + std::string(s) +
                   "\" (expected ref_replace, text_replace, target_replace or query_replace)");
}

namespace {

Triplet replace(const Triplet& positive, const Triplet& other, NegativeMethod method) {
  Triplet t = positive;
  switch (method) {
    case NegativeMethod::ref_replace: t.ref_id = other.ref_id; break;
    case NegativeMethod::text_replace: t.modified_text = other.modified_text; break;
    case NegativeMethod::target_replace: t.target_id = other.target_id; break;
    case NegativeMethod::query_replace:
      t.ref_id = other.ref_id;
      t.modified_text = other.modified_text;
      break;
  }
  return t;
}

}  // namespace

BatchPlan build_negative_batch(std::span<const Triplet> batch, NegativeMethod method, std::span<const Triplet> pool,
                               std::uint64_t seed) {
  if (pool.size() < 2) throw UsageError("negative pool needs at least 2 triplets");
  BatchPlan plan;
  plan.method = method;
  const std::size_t b = batch.size();
  const bool pool_is_batch = pool.data() == batch.data() && pool.size() == batch.size();
  if (!pool_is_batch && pool.size() < b) throw UsageError("negative pool smaller than the batch");
  plan.examples.reserve(b);
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < b; ++i) {
    PlannedExample ex;
    ex.positive = batch[i];
    if (pool_is_batch) {
      for (std::size_t j = 0; j < b; ++j) {
        if (j != i) ex.negatives.push_back(replace(batch[i], pool[j], method));
      }
    } else {
      Rng rng(stream_seed(seed, i));
      for (std::size_t j = 0; j < pool.size(); ++j) order[j] = j;
      std::size_t taken = 0;
      for (std::size_t j = 0; j < pool.size() && taken + 1 < b; ++j) {
        const std::size_t pick = j + rng.uniform_index(pool.size() - j);
        std::swap(order[j], order[pick]);
        if (pool[order[j]] == batch[i]) continue;
        ex.negatives.push_back(replace(batch[i], pool[order[j]], method));
        ++taken;
      }
      if (taken + 1 < b) throw UsageError("negative pool has too few distinct triplets");
    }
    plan.examples.push_back(std::move(ex));
  }
  return plan;
}

}  // namespace cir
