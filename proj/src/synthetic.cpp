#include "cir/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cir/error.hpp"
#include "cir/rng.hpp"

namespace cir {
namespace {

std::vector<double> gaussian(Rng& rng, std::size_t d, double scale) {
  std::vector<double> v(d);
  for (double& x : v) x = rng.normal() * scale;
  return v;
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (double& x : v) x /= s;
}

std::vector<double> unit(Rng& rng, std::size_t d) {
  std::vector<double> v = gaussian(rng, d, 1.0);
  normalize(v);
  return v;
}

// Gram-Schmidt on a Gaussian matrix; rows are orthonormal.
std::vector<std::vector<double>> random_rotation(Rng& rng, std::size_t d) {
  std::vector<std::vector<double>> q;
  while (q.size() < d) {
    std::vector<double> v = gaussian(rng, d, 1.0);
    for (const auto& b : q) {
      double p = 0.0;
      for (std::size_t k = 0; k < d; ++k) p += v[k] * b[k];
      for (std::size_t k = 0; k < d; ++k) v[k] -= p * b[k];
    }
    double s = 0.0;
    for (double x : v) s += x * x;
    if (s < 1e-12) continue;
    normalize(v);
    q.push_back(std::move(v));
  }
  return q;
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", prefix, i);
  return buf;
}

void append(std::vector<float>& out, const std::vector<double>& v) {
  for (double x : v) out.push_back(static_cast<float>(x));
}

}  // namespace

SyntheticDataset make_synthetic(const SyntheticConfig& cfg) {
  if (cfg.dim < 2) throw UsageError("synthetic dim must be >= 2");
  if (cfg.triplets < 2) throw UsageError("synthetic dataset needs at least 2 triplets");
  if (cfg.train + cfg.val >= cfg.triplets) throw UsageError("train + val must leave a non-empty test split");
  if (!(cfg.scale_min > 0.0) || cfg.scale_max < cfg.scale_min) throw UsageError("need 0 < scale_min <= scale_max");
  if (cfg.group_size < 2 || cfg.group_size > cfg.triplets) throw UsageError("group_size must be in [2, triplets]");

  const std::size_t n = cfg.triplets;
  const std::size_t d = cfg.dim;
  Rng rng(cfg.seed);
  const auto rotation = random_rotation(rng, d);
  const std::vector<double> mu = unit(rng, d);
  const std::vector<double> nu = unit(rng, d);

  const auto observe = [&](const std::vector<double>& m) {
    std::vector<double> e(d);
    for (std::size_t k = 0; k < d; ++k) {
      double x = m[k];
      if (cfg.rotate_text) {
        x = 0.0;
        for (std::size_t j = 0; j < d; ++j) x += rotation[k][j] * m[j];
      }
      e[k] = x + cfg.text_bias * mu[k];
    }
    normalize(e);
    return e;
  };

  std::vector<std::vector<double>> vocab;
  std::vector<std::string> image_ids, text_ids;
  std::vector<float> refs, targets, texts;
  for (std::size_t v = 0; v < cfg.vocabulary; ++v) {
    vocab.push_back(unit(rng, d));
    append(texts, observe(vocab.back()));
    text_ids.push_back(numbered("mod", v));
  }
  std::vector<std::size_t> text_of(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r = gaussian(rng, d, 1.0 / std::sqrt(static_cast<double>(d)));
    for (std::size_t k = 0; k < d; ++k) r[k] += cfg.image_bias * nu[k];
    normalize(r);
    std::vector<double> m;
    if (vocab.empty()) {
      m = unit(rng, d);
      text_of[i] = i;
      append(texts, observe(m));
      text_ids.push_back(numbered("mod", i));
    } else {
      text_of[i] = rng.uniform_index(vocab.size());
      m = vocab[text_of[i]];
    }
    const double scale = std::exp(std::log(cfg.scale_min) + rng.uniform() * std::log(cfg.scale_max / cfg.scale_min));
    std::vector<double> t(d);
    for (std::size_t k = 0; k < d; ++k) t[k] = r[k] + scale * m[k] + cfg.noise * rng.normal();
    normalize(t);
    append(refs, r);
    append(targets, t);
  }
  for (std::size_t i = 0; i < n; ++i) image_ids.push_back(numbered("ref", i));
  for (std::size_t i = 0; i < n; ++i) image_ids.push_back(numbered("tgt", i));
  refs.insert(refs.end(), targets.begin(), targets.end());

  SyntheticDataset ds{EmbeddingMatrix(image_ids, d, std::move(refs), true),
                      EmbeddingMatrix(text_ids, d, std::move(texts), true),
                      {}, {}, {}, {}};

  Rng group_rng(stream_seed(cfg.seed, 1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string ref = numbered("ref", i), mod = numbered("mod", text_of[i]), tgt = numbered("tgt", i);
    if (i < cfg.train) {
      ds.train.push_back({ref, mod, tgt, Provenance::annotated, std::nullopt});
      continue;
    }
    const std::string split = i < cfg.train + cfg.val ? "val" : "test";
    const std::string group = numbered("group", i);
    std::vector<std::string> members{ref, tgt};
    while (members.size() < cfg.group_size) {
      const std::size_t j = group_rng.uniform_index(n);
      const std::string other = numbered("tgt", j);
      if (std::find(members.begin(), members.end(), other) == members.end()) members.push_back(other);
    }
    ds.groups.emplace(group, std::move(members));
    EvalQuery q{ref, mod, tgt, group, "all"};
    (split == "val" ? ds.val : ds.test).push_back(std::move(q));
  }
  return ds;
}

void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_embeddings(ds.images, dir / "images.cire");
  write_embeddings(ds.texts, dir / "texts.cire");
  write_triplets(dir / "train.jsonl", ds.train);
  write_queries(dir / "val.jsonl", ds.val);
  write_queries(dir / "test.jsonl", ds.test);
  write_groups(dir / "groups.jsonl", ds.groups);
}

}  // namespace cir
