#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cir/contrastive.hpp"
#include "cir/error.hpp"
#include "cir/kernels.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cir;

namespace {

NegativeCache cache_of(const EmbeddingMatrix& m) { return NegativeCache{m, "fp"}; }

oracle::Mat matrix_rows(const EmbeddingMatrix& m) {
  oracle::Mat out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

Triplet trip(const std::string& r, const std::string& m, const std::string& t) {
  return {r, m, t, Provenance::annotated, std::nullopt};
}

}  // namespace

TEST_CASE("closed-form values") {
  const DenseMatrix one = fixture::dense_of({{1, 0}});
  CHECK(loss_in_batch(one, one, 0.05).loss == 0.0);
  const DenseMatrix q = fixture::dense_of({{1, 0}, {1, 0}});
  const DenseMatrix t = fixture::dense_of({{0, 1}, {0, -1}});
  CHECK(loss_in_batch(q, t, 0.1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("in-batch loss and gradient match the oracle") {
  Rng rng(1);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t b = 1 + rng.uniform_index(8), d = 1 + rng.uniform_index(8);
    const double tau = std::array{0.01, 0.05, 0.2}[inst % 3];
    const DenseMatrix q = testutil::random_dense(rng, b, d), t = testutil::random_dense(rng, b, d);
    const LossResult res = loss_in_batch(q, t, tau);
    const oracle::Mat qo = fixture::rows_of(q), to = fixture::rows_of(t);
    CHECK(std::abs(res.loss - oracle::in_batch_loss(qo, to, tau)) <= 1e-6);
    const double h = 1e-6;
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        oracle::Mat up = qo, down = qo;
        up[i][k] += h;
        down[i][k] -= h;
        const double num = (oracle::in_batch_loss(up, to, tau) - oracle::in_batch_loss(down, to, tau)) / (2 * h);
        CHECK(res.grad_queries.at(i, k) == doctest::Approx(num).epsilon(1e-4).scale(1.0));
        up = to;
        down = to;
        up[i][k] += h;
        down[i][k] -= h;
        const double numt = (oracle::in_batch_loss(qo, up, tau) - oracle::in_batch_loss(qo, down, tau)) / (2 * h);
        CHECK(res.grad_targets.at(i, k) == doctest::Approx(numt).epsilon(1e-4).scale(1.0));
      }
    }
  }
}

TEST_CASE("full-corpus loss matches the oracle over random pools") {
  Rng rng(2);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t b = 1 + rng.uniform_index(8), d = 1 + rng.uniform_index(8);
    const std::size_t n = b + rng.uniform_index(64 - b + 1);
    const double tau = std::array{0.01, 0.05, 0.2}[inst % 3];
    const NegativeCache cache = cache_of(testutil::random_matrix(rng.next(), n, d));
    const DenseMatrix q = testutil::random_dense(rng, b, d);
    std::vector<std::size_t> positives(b);
    for (auto& p : positives) p = rng.uniform_index(n);
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    if (inst % 2 == 1) {
      std::vector<std::size_t> keep(positives);
      for (std::size_t j = 0; j < n; ++j) {
        if (rng.uniform() < 0.5) keep.push_back(j);
      }
      std::sort(keep.begin(), keep.end());
      keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
      pool = keep;
    }
    const LossResult res = loss_full_corpus(q, positives, cache, tau, inst % 2 ? pool : std::vector<std::size_t>{},
                                            1 + rng.uniform_index(16));
    const double expected =
        oracle::full_corpus_loss(fixture::rows_of(q), positives, matrix_rows(cache.corpus), pool, tau);
    CHECK(std::abs(res.loss - expected) <= 1e-6);
    CHECK(res.grad_targets.rows == 0);
  }
}

TEST_CASE("full-corpus loss degenerates to the in-batch loss") {
  Rng rng(3);
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t b = 1 + rng.uniform_index(8), d = 1 + rng.uniform_index(8);
    const double tau = 0.01 + 0.19 * rng.uniform();
    const EmbeddingMatrix targets = testutil::random_matrix(rng.next(), b, d);
    const DenseMatrix q = testutil::random_dense(rng, b, d);
    std::vector<std::size_t> positives(b);
    std::iota(positives.begin(), positives.end(), 0);
    const LossResult full = loss_full_corpus(q, positives, cache_of(targets), tau);
    const LossResult batch = loss_in_batch(q, fixture::dense_of(matrix_rows(targets)), tau);
    CHECK(std::abs(full.loss - batch.loss) <= 1e-6);
    for (std::size_t i = 0; i < q.values.size(); ++i) {
      CHECK(full.grad_queries.values[i] == doctest::Approx(batch.grad_queries.values[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("candidate loss generalizes the in-batch arrangement") {
  Rng rng(4);
  const DenseMatrix q = testutil::random_dense(rng, 5, 4), t = testutil::random_dense(rng, 5, 4);
  std::vector<std::vector<CandidateIndex>> transposed(5);
  for (std::size_t i = 0; i < 5; ++i) {
    transposed[i].push_back({i, i});
    for (std::size_t j = 0; j < 5; ++j) {
      if (j != i) transposed[i].push_back({j, i});
    }
  }
  const double expected = oracle::in_batch_loss(fixture::rows_of(t), fixture::rows_of(q), 0.07);
  CHECK(loss_candidates(q, t, transposed, 0.07).loss == doctest::Approx(expected).epsilon(1e-12));
  std::vector<std::vector<CandidateIndex>> bad = {{{0, 9}}};
  CHECK_THROWS_AS(loss_candidates(q, t, bad, 0.07), DataError);
}

TEST_CASE("batch permutation leaves the loss unchanged") {
  Rng rng(5);
  const DenseMatrix q = testutil::random_dense(rng, 6, 5), t = testutil::random_dense(rng, 6, 5);
  std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  DenseMatrix qp(6, 5), tp(6, 5);
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy(q.row(perm[i]).begin(), q.row(perm[i]).end(), qp.row(i).begin());
    std::copy(t.row(perm[i]).begin(), t.row(perm[i]).end(), tp.row(i).begin());
  }
  CHECK(loss_in_batch(qp, tp, 0.05).loss == doctest::Approx(loss_in_batch(q, t, 0.05).loss).epsilon(1e-12));
}

TEST_CASE("low temperature stays finite") {
  const DenseMatrix q = fixture::dense_of({{1, 0}, {0, 1}});
  const DenseMatrix t = fixture::dense_of({{-1, 0}, {0, 1}});
  const LossResult r = loss_in_batch(q, t, 0.001);
  CHECK(std::isfinite(r.loss));
  // Row 0 pays 1000 and row 1 almost nothing; the loss is their mean.
  CHECK(r.loss == doctest::Approx(500.0 + std::log1p(std::exp(-1000.0))));
  for (double g : r.grad_queries.values) CHECK(std::isfinite(g));
  CHECK_THROWS_AS(loss_in_batch(q, t, 0.0), UsageError);
  CHECK_THROWS_AS(loss_in_batch(q, t, -1.0), UsageError);
}

TEST_CASE("chunking and kernels do not change the streamed sum") {
  Rng rng(6);
  const NegativeCache cache = cache_of(testutil::random_matrix(7, 300, 6));
  const DenseMatrix q = testutil::random_dense(rng, 4, 6);
  const std::vector<std::size_t> pos = {0, 17, 299, 150};
  const double ref = loss_full_corpus(q, pos, cache, 0.02, {}, 300).loss;
  for (std::size_t chunk : {1, 7, 64, 4096}) {
    CHECK(loss_full_corpus(q, pos, cache, 0.02, {}, chunk).loss == doctest::Approx(ref).epsilon(1e-12));
  }
  const std::string before = kernels::active().name;
  for (const kernels::KernelTable* k : kernels::available()) {
    kernels::select(k->name);
    CHECK(loss_full_corpus(q, pos, cache, 0.02).loss == doctest::Approx(ref).epsilon(1e-12));
  }
  kernels::select(before);
  CHECK_THROWS_AS(loss_full_corpus(q, pos, cache, 0.02, {}, 0), UsageError);
}

TEST_CASE("id-keyed full-corpus loss checks the cache") {
  const EmbeddingMatrix m = testutil::random_matrix(8, 5, 3);
  NegativeCache cache{m, "abc"};
  Rng rng(8);
  const DenseMatrix q = testutil::random_dense(rng, 1, 3);
  const std::vector<std::string> ids = {"img2"};
  CHECK(loss_full_corpus(q, ids, cache, 0.1, "abc").loss ==
        doctest::Approx(loss_full_corpus(q, std::vector<std::size_t>{2}, cache, 0.1).loss));
  CHECK_THROWS_AS(loss_full_corpus(q, ids, cache, 0.1, "abd"), DataError);
  CHECK_THROWS_AS(loss_full_corpus(q, std::vector<std::string>{"nope"}, cache, 0.1, "abc"), DataError);
}

TEST_CASE("negative construction from batch members") {
  const std::vector<Triplet> batch = {trip("r1", "m1", "t1"), trip("r2", "m2", "t2"), trip("r3", "m3", "t3")};
  const std::vector<Triplet> two(batch.begin(), batch.begin() + 2);
  const BatchPlan text = build_negative_batch(two, NegativeMethod::text_replace, two, 0);
  REQUIRE(text.examples.size() == 2);
  CHECK(text.examples[0].negatives == std::vector<Triplet>{trip("r1", "m2", "t1")});
  CHECK(text.examples[1].negatives == std::vector<Triplet>{trip("r2", "m1", "t2")});

  const BatchPlan ref = build_negative_batch(batch, NegativeMethod::ref_replace, batch, 0);
  CHECK(ref.examples[1].negatives == std::vector<Triplet>{trip("r1", "m2", "t2"), trip("r3", "m2", "t2")});
  const BatchPlan tgt = build_negative_batch(batch, NegativeMethod::target_replace, batch, 0);
  CHECK(tgt.examples[2].negatives == std::vector<Triplet>{trip("r3", "m3", "t1"), trip("r3", "m3", "t2")});
  const BatchPlan qry = build_negative_batch(batch, NegativeMethod::query_replace, batch, 0);
  CHECK(qry.examples[0].negatives == std::vector<Triplet>{trip("r2", "m2", "t1"), trip("r3", "m3", "t1")});

  const std::vector<Triplet> single = {batch[0]};
  CHECK_THROWS_AS(build_negative_batch(single, NegativeMethod::text_replace, single, 0), UsageError);
}

TEST_CASE("negative construction from an external pool") {
  std::vector<Triplet> pool;
  for (int i = 0; i < 20; ++i) {
    pool.push_back(trip("r" + std::to_string(i), "m" + std::to_string(i), "t" + std::to_string(i)));
  }
  const std::vector<Triplet> batch(pool.begin(), pool.begin() + 4);
  const BatchPlan a = build_negative_batch(batch, NegativeMethod::target_replace, pool, 9);
  const BatchPlan b = build_negative_batch(batch, NegativeMethod::target_replace, pool, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.examples[i].negatives == b.examples[i].negatives);
    CHECK(a.examples[i].negatives.size() == 3);
    std::vector<std::string> seen;
    for (const Triplet& n : a.examples[i].negatives) {
      CHECK(n.ref_id == batch[i].ref_id);
      CHECK(n.target_id != batch[i].target_id);
      seen.push_back(n.target_id);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  }
  const std::vector<Triplet> small(pool.begin(), pool.begin() + 2);
  CHECK_THROWS_AS(build_negative_batch(batch, NegativeMethod::target_replace, small, 0), UsageError);
  CHECK(parse_negative_method("3") == NegativeMethod::target_replace);
  CHECK(parse_negative_method("query_replace") == NegativeMethod::query_replace);
  CHECK_THROWS_AS(parse_negative_method("5"), UsageError);
}

TEST_CASE("negative cache round trip and identity projection") {
  const EmbeddingMatrix corpus = testutil::random_matrix(10, 12, 5);
  const FusionParams p = FusionParams::sum_fusion(5, 3);
  const NegativeCache cache = cache_targets(p, corpus);
  CHECK(cache.fingerprint == target_fingerprint(p));
  for (std::size_t i = 0; i < corpus.rows(); ++i) {
    for (std::size_t k = 0; k < 5; ++k) CHECK(cache.corpus.row(i)[k] == doctest::Approx(corpus.row(i)[k]).epsilon(1e-7));
  }
  testutil::TempDir dir("cache");
  save_negative_cache(cache, dir / "c.cire");
  const NegativeCache back = load_negative_cache(dir / "c.cire");
  CHECK(back.fingerprint == cache.fingerprint);
  CHECK(back.corpus.ids() == cache.corpus.ids());
  CHECK(std::equal(back.corpus.data().begin(), back.corpus.data().end(), cache.corpus.data().begin()));
  CHECK_THROWS_AS(cache_targets(FusionParams::sum_fusion(4, 3), corpus), DataError);
}
