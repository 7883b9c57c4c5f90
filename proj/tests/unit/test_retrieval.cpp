#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cir/error.hpp"
#include "cir/retrieval.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cir;

namespace {

/// Candidates with a few exact duplicate rows so that ties occur.
EmbeddingMatrix corpus_with_ties(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<float> data = testutil::unit_rows(rng, n, d);
  for (std::size_t i = 1; i < n; i += 7) {
    const std::size_t src = rng.uniform_index(i);
    std::copy_n(data.begin() + src * d, d, data.begin() + i * d);
  }
  std::vector<std::string> ids = testutil::numbered_ids("c", n);
  Rng shuffle(rng.next());
  shuffle.shuffle(std::span(ids));
  return EmbeddingMatrix(ids, d, data, true);
}

oracle::Vec scores_of(const DenseMatrix& q, std::size_t i, const EmbeddingMatrix& c) {
  oracle::Vec s(c.rows());
  for (std::size_t j = 0; j < c.rows(); ++j) {
    for (std::size_t k = 0; k < c.dim(); ++k) s[j] += q.at(i, k) * c.row(j)[k];
  }
  return s;
}

}  // namespace

TEST_CASE("recall and subset recall match sort-and-scan oracles") {
  Rng rng(31);
  for (int corpus = 0; corpus < 20; ++corpus) {
    const std::size_t n = 10 + rng.uniform_index(191), d = 2 + rng.uniform_index(7), nq = 1 + rng.uniform_index(30);
    const EmbeddingMatrix c = corpus_with_ties(rng, n, d);
    DenseMatrix q = testutil::random_dense(rng, nq, d);
    // Some queries equal a candidate so that the best score is shared.
    for (std::size_t i = 0; i < nq; i += 3) {
      const std::size_t src = rng.uniform_index(n);
      for (std::size_t k = 0; k < d; ++k) q.at(i, k) = c.row(src)[k];
    }
    std::vector<std::uint32_t> targets(nq), refs(nq);
    std::vector<std::optional<std::uint32_t>> masked(nq);
    std::vector<std::vector<std::uint32_t>> groups(nq);
    for (std::size_t i = 0; i < nq; ++i) {
      targets[i] = static_cast<std::uint32_t>(rng.uniform_index(n));
      do {
        refs[i] = static_cast<std::uint32_t>(rng.uniform_index(n));
      } while (refs[i] == targets[i]);
      if (corpus % 2 == 0) masked[i] = refs[i];
      groups[i] = {refs[i], targets[i]};
      while (groups[i].size() < 6) {
        const auto m = static_cast<std::uint32_t>(rng.uniform_index(n));
        if (std::find(groups[i].begin(), groups[i].end(), m) == groups[i].end()) groups[i].push_back(m);
      }
    }
    const std::vector<std::size_t> ks = {1, 2, 5, std::min<std::size_t>(n - 1, 50)};
    const auto ranked = rank_candidates(q, c, masked, ks.back());
    const RecallMap got = recall_at_k(ranked, targets, ks);
    const std::vector<std::size_t> subset_ks = {1, 2, 3};
    const RecallMap sub = subset_recall_at_k(q, c, refs, targets, groups, subset_ks);
    for (std::size_t k : ks) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < nq; ++i) {
        const std::size_t pos =
            oracle::target_position(scores_of(q, i, c), c.ids(), targets[i], masked[i] ? *masked[i] : SIZE_MAX);
        if (pos < k) ++hits;
      }
      CHECK(got.at(k) == static_cast<double>(hits) / static_cast<double>(nq));
    }
    for (std::size_t k : subset_ks) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < nq; ++i) {
        const std::vector<std::size_t> allowed(groups[i].begin(), groups[i].end());
        if (oracle::target_position(scores_of(q, i, c), c.ids(), targets[i], refs[i], allowed) < k) ++hits;
      }
      CHECK(sub.at(k) == static_cast<double>(hits) / static_cast<double>(nq));
    }
  }
}

TEST_CASE("ranked lists are ordered by score then id") {
  const EmbeddingMatrix c({"b", "a", "c", "d"}, 2, {1, 0, 1, 0, 0, 1, 0.6f, 0.8f}, true);
  const DenseMatrix q = fixture::dense_of({{1, 0}});
  const auto ranked = rank_candidates(q, c, {}, 4);
  CHECK(ranked[0] == std::vector<std::uint32_t>{1, 0, 3, 2});
  const std::vector<std::optional<std::uint32_t>> mask = {1u};
  CHECK(rank_candidates(q, c, mask, 4)[0] == std::vector<std::uint32_t>{0, 3, 2});
}

TEST_CASE("recall is monotone in K and masking removes the reference") {
  Rng rng(32);
  const EmbeddingMatrix c = testutil::random_matrix(3, 80, 4);
  const DenseMatrix q = testutil::random_dense(rng, 40, 4);
  std::vector<std::uint32_t> targets(40);
  std::vector<std::optional<std::uint32_t>> masked(40);
  for (std::size_t i = 0; i < 40; ++i) {
    targets[i] = static_cast<std::uint32_t>(rng.uniform_index(80));
    masked[i] = static_cast<std::uint32_t>((targets[i] + 1) % 80);
  }
  const auto ranked = rank_candidates(q, c, masked, 79);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(std::find(ranked[i].begin(), ranked[i].end(), *masked[i]) == ranked[i].end());
  }
  std::vector<std::size_t> ks(79);
  for (std::size_t k = 0; k < 79; ++k) ks[k] = k + 1;
  const RecallMap r = recall_at_k(ranked, targets, ks);
  for (std::size_t k = 1; k < 79; ++k) CHECK(r.at(k) <= r.at(k + 1));
  CHECK(r.at(79) == 1.0);
  const std::vector<std::size_t> too_deep = {80};
  CHECK_THROWS_AS(recall_at_k(ranked, targets, too_deep), UsageError);
  const std::vector<std::size_t> zero = {0};
  CHECK_THROWS_AS(recall_at_k(ranked, targets, zero), UsageError);
}

TEST_CASE("subset recall preconditions") {
  const EmbeddingMatrix c = testutil::random_matrix(4, 6, 3);
  Rng rng(4);
  const DenseMatrix q = testutil::random_dense(rng, 1, 3);
  const std::vector<std::uint32_t> refs = {0}, targets = {1};
  const std::vector<std::size_t> k1 = {1}, k3 = {3};
  const std::vector<std::vector<std::uint32_t>> only_target = {{1}};
  CHECK(subset_recall_at_k(q, c, refs, targets, only_target, k1).at(1) == 1.0);
  CHECK_THROWS_AS(subset_recall_at_k(q, c, refs, targets, only_target, k3), DataError);
  const std::vector<std::vector<std::uint32_t>> without_target = {{0, 2, 3, 4}};
  CHECK_THROWS_AS(subset_recall_at_k(q, c, refs, targets, without_target, k1), DataError);
}

TEST_CASE("Rmean conventions and rounding") {
  const RecallMap cirr_recall = {{1, 0.5}, {5, 0.8212}, {10, 0.9}};
  const RecallMap cirr_subset = {{1, 0.8065}, {2, 0.9}};
  const double r = rmean(cirr_recall, cirr_subset, Convention::cirr);
  CHECK(r == doctest::Approx(0.81385).epsilon(1e-12));
  CHECK(round_decimal(r * 100, 2) == 81.39);
  CHECK(round_decimal((82.12 + 80.65) / 2, 2) == 81.39);

  // Per-split R@10 and R@50 of three categories; the mean of the six values.
  const double r10 = (49.18 + 55.64 + 59.35) / 300, r50 = (72.43 + 73.89 + 78.58) / 300;
  const RecallMap fiq = {{10, r10}, {50, r50}};
  CHECK(round_decimal(rmean(fiq, {}, Convention::fashioniq) * 100, 2) == 64.85);
  CHECK(rmean({{10, 1.0}, {50, 1.0}}, {}, Convention::fashioniq) == 1.0);

  CHECK_THROWS_AS(rmean({{10, 0.5}}, cirr_subset, Convention::cirr), DataError);
  CHECK_THROWS_AS(rmean(cirr_recall, {}, Convention::cirr), DataError);
  CHECK_THROWS_AS(rmean({}, {}, Convention::fashioniq), DataError);
  CHECK(round_decimal(-1.005, 2) == -1.01);
  CHECK(round_decimal(2.5, 0) == 3.0);
  CHECK(parse_convention("cirr") == Convention::cirr);
  CHECK_THROWS_AS(parse_convention("coco"), UsageError);
}

TEST_CASE("evaluate resolves ids, splits and groups") {
  const EmbeddingMatrix images({"i0", "i1", "i2", "i3"}, 2, {1, 0, 0, 1, -1, 0, 0, -1}, true);
  const EmbeddingMatrix texts({"up", "left"}, 2, {0, 1, -1, 0}, true);
  const FusionParams p = FusionParams::sum_fusion(2, 2);
  // i0 + up points between i0 and i1; i1 + left between i1 and i2.
  std::vector<EvalQuery> queries = {{"i0", "up", "i1", "g", "a"}, {"i1", "left", "i2", "g", "b"}};
  Groups groups = {{"g", {"i0", "i1", "i2"}}};
  EvalOptions opts;
  opts.ks = {1, 2};
  const EvalReport fiq = evaluate(p, queries, texts, images, nullptr, opts);
  CHECK(!fiq.masked_reference);
  CHECK(fiq.per_split.at("a").at(1) == 0.0);  // i0 ties with i1 and sorts first
  CHECK(fiq.per_split.at("a").at(2) == 1.0);
  CHECK(fiq.per_split.at("b").at(1) == 0.0);
  CHECK(fiq.recall_at.at(2) == 1.0);

  opts.convention = Convention::cirr;
  opts.ks = {1, 5};
  opts.subset_ks = {1};
  CHECK_THROWS_AS(evaluate(p, queries, texts, images, &groups, opts), UsageError);
  opts.ks = {1, 3};
  const EvalReport masked = evaluate(p, queries, texts, images, &groups, {Convention::fashioniq, {1, 3}, {1}, true});
  CHECK(masked.masked_reference);
  CHECK(masked.recall_at.at(1) == 1.0);
  CHECK(masked.subset_recall_at.at(1) == 1.0);

  CHECK_THROWS_AS(evaluate(p, {}, texts, images, nullptr, opts), DataError);
  CHECK_THROWS_AS(evaluate(p, queries, texts, images, nullptr, opts), DataError);
  queries[0].text_id = "down";
  CHECK_THROWS_AS(evaluate(p, queries, texts, images, &groups, opts), DataError);
}

TEST_CASE("query and group files round trip") {
  testutil::TempDir dir("queries");
  const std::vector<EvalQuery> qs = {{"r", "t", "x", std::nullopt, "all"}, {"r2", "t2", "x2", "g1", "dress"}};
  write_queries(dir / "q.jsonl", qs);
  const auto back = read_queries(dir / "q.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(!back[0].group_id);
  CHECK(back[1].group_id == "g1");
  CHECK(back[1].split == "dress");
  write_groups(dir / "g.jsonl", {{"g1", {"a", "b"}}});
  CHECK(read_groups(dir / "g.jsonl").at("g1") == std::vector<std::string>{"a", "b"});
}
