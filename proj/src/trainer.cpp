#include "cir/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include "cir/adamw.hpp"
#include "cir/error.hpp"
#include "cir/rng.hpp"

namespace cir {
namespace {

struct Rendering {
  std::uint32_t ref = 0;
  std::uint32_t text = 0;
  std::uint32_t target = 0;
};

struct Example {
  std::vector<Rendering> renderings;
};

std::vector<Example> group_examples(const TrainingData& data) {
  std::vector<Example> out;
  std::map<std::pair<std::string, std::string>, std::size_t> generated;
  for (const Triplet& t : data.triplets) {
    validate_triplet(t);
    const Rendering r{static_cast<std::uint32_t>(data.images->index_of(t.ref_id)),
                      static_cast<std::uint32_t>(data.texts->index_of(t.modified_text)),
                      static_cast<std::uint32_t>(data.images->index_of(t.target_id))};
    if (t.provenance == Provenance::generated) {
      auto [it, fresh] = generated.emplace(std::make_pair(t.ref_id, t.target_id), out.size());
      if (!fresh) {
        out[it->second].renderings.push_back(r);
        continue;
      }
    }
    out.push_back(Example{{r}});
  }
  return out;
}

constexpr std::array<bool, kTensorCount> kDecay = {true, false, true, false, true};

void apply_update(Checkpoint& ckpt, const FusionGradients& grads, const TrainConfig& cfg, bool train_target) {
  ++ckpt.optimizer.step;
  AdamWConfig opt;
  opt.learning_rate = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  for (std::size_t t = 0; t < kTensorCount; ++t) {
    if (t == kWt && !train_target) continue;
    adamw_update(ckpt.params.tensors[t], grads.tensors[t], ckpt.optimizer.first_moment[t],
                 ckpt.optimizer.second_moment[t], ckpt.optimizer.step, opt, kDecay[t]);
  }
}

class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const TrainingData& data, const NegativeCache* cache)
      : cfg_(cfg), data_(data), cache_(cache) {}

  double step_stage_one(Checkpoint& ckpt, std::span<const Rendering> batch) {
    const FusionParams& p = ckpt.params;
    if (cfg_.neg_method == NegativeMethod::target_replace || batch.size() < 2) {
      std::vector<QueryTrace> qt;
      std::vector<TargetTrace> tt;
      DenseMatrix q(batch.size(), p.dim), t(batch.size(), p.dim);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        qt.push_back(encode_query(p, data_.images->row(batch[i].ref), data_.texts->row(batch[i].text)));
        tt.push_back(encode_target(p, data_.images->row(batch[i].target), false));
        std::copy(qt.back().query.begin(), qt.back().query.end(), q.row(i).begin());
        std::copy(tt.back().target.begin(), tt.back().target.end(), t.row(i).begin());
      }
      LossResult res = loss_in_batch(q, t, cfg_.tau);
      apply_update(ckpt, backward(p, qt, res.grad_queries, tt, res.grad_targets), cfg_, true);
      return res.loss;
    }

    std::vector<Triplet> triplets;
    triplets.reserve(batch.size());
    for (const Rendering& r : batch) {
      triplets.push_back({data_.images->id(r.ref), data_.texts->id(r.text), data_.images->id(r.target),
                          Provenance::annotated, std::nullopt});
    }
    const BatchPlan plan = build_negative_batch(triplets, cfg_.neg_method, triplets, cfg_.seed);

    std::map<std::pair<std::size_t, std::size_t>, std::size_t> query_slot;
    std::map<std::size_t, std::size_t> target_slot;
    std::vector<QueryTrace> qt;
    std::vector<TargetTrace> tt;
    const auto query_index = [&](const Triplet& t) {
      const std::size_t ref = data_.images->index_of(t.ref_id);
      const std::size_t text = data_.texts->index_of(t.modified_text);
      auto [it, fresh] = query_slot.emplace(std::make_pair(ref, text), qt.size());
      if (fresh) qt.push_back(encode_query(p, data_.images->row(ref), data_.texts->row(text)));
      return it->second;
    };
    const auto target_index = [&](const Triplet& t) {
      const std::size_t row = data_.images->index_of(t.target_id);
      auto [it, fresh] = target_slot.emplace(row, tt.size());
      if (fresh) tt.push_back(encode_target(p, data_.images->row(row), false));
      return it->second;
    };
    std::vector<std::vector<CandidateIndex>> candidates(plan.examples.size());
    for (std::size_t e = 0; e < plan.examples.size(); ++e) {
      const auto& ex = plan.examples[e];
      candidates[e].push_back({query_index(ex.positive), target_index(ex.positive)});
      for (const Triplet& neg : ex.negatives) candidates[e].push_back({query_index(neg), target_index(neg)});
    }
    DenseMatrix q(qt.size(), p.dim), t(tt.size(), p.dim);
    for (std::size_t i = 0; i < qt.size(); ++i) std::copy(qt[i].query.begin(), qt[i].query.end(), q.row(i).begin());
    for (std::size_t i = 0; i < tt.size(); ++i) std::copy(tt[i].target.begin(), tt[i].target.end(), t.row(i).begin());
    LossResult res = loss_candidates(q, t, candidates, cfg_.tau);
    apply_update(ckpt, backward(p, qt, res.grad_queries, tt, res.grad_targets), cfg_, true);
    return res.loss;
  }

  double step_stage_two(Checkpoint& ckpt, std::span<const Rendering> batch, Rng& rng) {
    const FusionParams& p = ckpt.params;
    std::vector<QueryTrace> qt;
    DenseMatrix q(batch.size(), p.dim);
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      qt.push_back(encode_query(p, data_.images->row(batch[i].ref), data_.texts->row(batch[i].text)));
      std::copy(qt.back().query.begin(), qt.back().query.end(), q.row(i).begin());
      positives.push_back(cache_rows_[batch[i].target]);
    }
    std::vector<std::size_t> pool;
    const std::size_t n = cache_->corpus.rows();
    if (cfg_.neg_pool != 0 && cfg_.neg_pool < n) {
      std::unordered_set<std::size_t> chosen(positives.begin(), positives.end());
      pool.assign(chosen.begin(), chosen.end());
      std::sort(pool.begin(), pool.end());
      while (pool.size() < cfg_.neg_pool) {
        const std::size_t r = rng.uniform_index(n);
        if (chosen.insert(r).second) pool.push_back(r);
      }
    }
    LossResult res = loss_full_corpus(q, positives, *cache_, cfg_.tau, pool);
    DenseMatrix no_targets;
    apply_update(ckpt, backward(p, qt, res.grad_queries, {}, no_targets), cfg_, false);
    return res.loss;
  }

  std::optional<double> validate(const FusionParams& p) const {
    if (data_.validation.empty()) return std::nullopt;
    const EncodedQueries eq = encode_queries(p, data_.validation, *data_.texts, *data_.images, data_.groups,
                                             !data_.val.subset_ks.empty());
    EvalOptions opts;
    opts.convention = data_.val.convention;
    opts.subset_ks = data_.val.subset_ks;
    opts.mask_reference = data_.val.mask_reference;
    const std::size_t limit = data_.images->rows() - 1;
    for (std::size_t k : data_.val.ks) {
      if (k <= limit) opts.ks.push_back(k);
    }
    if (opts.ks.empty()) opts.ks.push_back(1);
    if (cfg_.stage == Stage::two) return evaluate_encoded(eq, cache_->corpus, opts).rmean;
    const NegativeCache candidates = cache_targets(p, *data_.images);
    return evaluate_encoded(eq, candidates.corpus, opts).rmean;
  }

  void map_cache_rows() {
    cache_rows_.assign(data_.images->rows(), kNoRow);
    for (std::size_t i = 0; i < data_.images->rows(); ++i) {
      if (auto r = cache_->corpus.find(data_.images->id(i))) cache_rows_[i] = static_cast<std::uint32_t>(*r);
    }
  }

  std::uint32_t cache_row(std::uint32_t image_row) const { return cache_rows_[image_row]; }

 private:
  const TrainConfig& cfg_;
  const TrainingData& data_;
  const NegativeCache* cache_;
  std::vector<std::uint32_t> cache_rows_;
};

}  // namespace

TrainConfig TrainConfig::defaults(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.epochs = stage == Stage::one ? 50 : 5;
  return c;
}

std::vector<std::string> validate_config(const TrainConfig& cfg) {
  std::vector<std::string> problems;
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) problems.push_back("tau must be > 0");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) problems.push_back("lr must be > 0");
  if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay)) problems.push_back("weight_decay must be >= 0");
  if (cfg.batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (cfg.stage == Stage::two && cfg.neg_method != NegativeMethod::target_replace) {
    problems.push_back("stage two only supports neg_method=target_replace");
  }
  if (cfg.stage == Stage::one && cfg.neg_pool != 0) problems.push_back("neg_pool applies to stage two only");
  if (cfg.stage == Stage::two && cfg.neg_pool != 0 && cfg.neg_pool < cfg.batch_size) {
    problems.push_back("neg_pool must be 0 (whole cache) or >= batch_size");
  }
  return problems;
}

TrainResult train(const TrainConfig& cfg, const TrainingData& data, const Checkpoint* init,
                  const NegativeCache* cache) {
  if (auto problems = validate_config(cfg); !problems.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw UsageError(msg);
  }
  if (data.images == nullptr || data.texts == nullptr) throw UsageError("training needs image and text embeddings");
  if (!data.images->normalized() || !data.texts->normalized()) throw DataError("training embeddings must be normalized");
  if (data.images->dim() != data.texts->dim()) throw DataError("image and text embeddings differ in dim");

  TrainResult result;
  if (init != nullptr) {
    init->params.validate();
    if (init->params.dim != data.images->dim()) throw DataError("init checkpoint dim does not match the embeddings");
  }
  if (cfg.stage == Stage::two) {
    if (init == nullptr) throw UsageError("stage two needs an init checkpoint");
    if (cache == nullptr) throw UsageError("stage two needs a negative cache");
    if (cache->fingerprint != target_fingerprint(init->params)) {
      throw DataError("negative cache was built from a different target encoder than the init checkpoint");
    }
  }
  if (cfg.epochs == 0) {
    result.checkpoint = init != nullptr ? *init : Checkpoint{};
    if (init == nullptr) {
      const std::size_t d = data.images->dim();
      result.checkpoint.params = FusionParams::initialize(d, cfg.hidden == 0 ? d : cfg.hidden, cfg.seed);
      result.checkpoint.optimizer = OptimizerState::zeros(result.checkpoint.params);
    }
    return result;
  }

  const std::vector<Example> examples = group_examples(data);
  if (examples.empty()) throw DataError("no training triplets");

  Checkpoint ckpt;
  if (init != nullptr) {
    ckpt.params = init->params;
  } else {
    const std::size_t d = data.images->dim();
    ckpt.params = FusionParams::initialize(d, cfg.hidden == 0 ? d : cfg.hidden, cfg.seed);
  }
  ckpt.optimizer = OptimizerState::zeros(ckpt.params);
  if (cfg.stage == Stage::two) {
    ckpt.optimizer.first_moment[kWt] = init->optimizer.first_moment[kWt];
    ckpt.optimizer.second_moment[kWt] = init->optimizer.second_moment[kWt];
  }

  Trainer trainer(cfg, data, cache);
  if (cfg.stage == Stage::two) {
    trainer.map_cache_rows();
    for (const Example& ex : examples) {
      for (const Rendering& r : ex.renderings) {
        if (trainer.cache_row(r.target) == kNoRow) {
          throw DataError("target \"" + data.images->id(r.target) + "\" is not in the negative cache");
        }
      }
    }
  }

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::optional<double> best_score;
  Checkpoint best = ckpt;
  std::vector<Rendering> batch;
  Rng render_rng(stream_seed(cfg.seed, 0x72656e646572ULL));
  Rng pool_rng(stream_seed(cfg.seed, 0x706f6f6cULL));

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(stream_seed(cfg.seed, epoch));
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - first);
      batch.clear();
      for (std::size_t i = 0; i < count; ++i) {
        const Example& ex = examples[order[first + i]];
        batch.push_back(ex.renderings.size() == 1 ? ex.renderings[0]
                                                  : ex.renderings[render_rng.uniform_index(ex.renderings.size())]);
      }
      double loss = 0.0;
      try {
        loss = cfg.stage == Stage::one
                   ? trainer.step_stage_one(ckpt, batch)
                   : trainer.step_stage_two(ckpt, std::span<const Rendering>(batch), pool_rng);
      } catch (const NumericError& e) {
        throw NumericError("step " + std::to_string(ckpt.optimizer.step + 1) + ": " + e.what());
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(ckpt.optimizer.step));
      }
      for (const auto& t : ckpt.params.tensors) {
        for (float x : t) {
          if (!std::isfinite(x)) throw NumericError("non-finite parameters after step " + std::to_string(ckpt.optimizer.step));
        }
      }
      loss_sum += loss;
      ++steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.step = ckpt.optimizer.step;
    rec.loss = loss_sum / static_cast<double>(steps);
    rec.stage = cfg.stage;
    rec.val_rmean = trainer.validate(ckpt.params);
    result.log.push_back(rec);
    if (!cfg.select_best || !rec.val_rmean) {
      best = ckpt;
      result.selected_epoch = epoch;
    } else if (!best_score || *rec.val_rmean > *best_score) {
      best_score = rec.val_rmean;
      best = ckpt;
      result.selected_epoch = epoch;
    }
  }
  result.checkpoint = std::move(best);
  return result;
}

}  // namespace cir
