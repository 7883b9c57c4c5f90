#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <fstream>
#include <set>

#include "cir/error.hpp"
#include "cir/jsonl.hpp"
#include "cir/triplet_forge.hpp"
#include "test_util.hpp"

using namespace cir;

namespace {

// Rank of every other image for one reference, by an independent full sort.
std::vector<std::size_t> oracle_ranks(const EmbeddingMatrix& m, std::size_t ref) {
  const std::size_t n = m.rows();
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0;
    for (std::size_t k = 0; k < m.dim(); ++k) acc += double(m.row(ref)[k]) * double(m.row(j)[k]);
    s[j] = acc;
  }
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < n; ++j) {
    if (j != ref) others.push_back(j);
  }
  std::sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return m.id(a) < m.id(b);
  });
  std::vector<std::size_t> rank(n, n);
  for (std::size_t r = 0; r < others.size(); ++r) rank[others[r]] = r;
  return rank;
}

Quadruplet quad(std::string r, std::string rc, std::string t, std::string tc) {
  return {std::move(r), std::move(rc), std::move(t), std::move(tc)};
}

}  // namespace

TEST_CASE("window clamping") {
  CHECK(clamp_window({10, 20, 0}, 100).begin == 10);
  CHECK(clamp_window({10, 20, 0}, 100).end == 20);
  CHECK(clamp_window({10, 20000, 0}, 100).end == 99);
  CHECK_THROWS_AS(clamp_window({5, 5, 0}, 100), UsageError);
  CHECK_THROWS_AS(clamp_window({10000, 20000, 0}, 100), UsageError);
  CHECK_THROWS_AS(clamp_window({0, 1, 0}, 1), UsageError);
  const PairMatchConfig f = fractional_config(0.25, 0.5, 101, 3);
  CHECK(f.c0 == 25);
  CHECK(f.c1 == 50);
  CHECK(f.seed == 3);
  CHECK(fractional_config(0.0, 0.0001, 11, 0).c1 == 1);
}

TEST_CASE("window [0,1) pairs each image with its nearest neighbour") {
  const EmbeddingMatrix m = testutil::random_matrix(8, 5, 3);
  const auto pairs = match_pairs(m, {0, 1, 42});
  REQUIRE(pairs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(pairs[i].ref_id == m.id(i));
    CHECK(oracle_ranks(m, i)[m.index_of(pairs[i].target_id)] == 0);
  }
}

TEST_CASE("every sampled target falls inside the clamped window") {
  Rng meta(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + meta.uniform_index(255);
    const std::size_t d = 1 + meta.uniform_index(12);
    const EmbeddingMatrix m = testutil::random_matrix(meta.next(), n, d);
    const std::size_t c0 = meta.uniform_index(n - 1);
    const std::size_t c1 = c0 + 1 + meta.uniform_index(n + 5);
    const PairMatchConfig cfg{c0, c1, meta.next()};
    CAPTURE(n);
    CAPTURE(c0);
    CAPTURE(c1);
    const auto pairs = match_pairs(m, cfg, 1 + meta.uniform_index(64));
    REQUIRE(pairs.size() == n);
    const std::size_t end = std::min(c1, n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(pairs[i].ref_id == m.id(i));
      CHECK(pairs[i].target_id != pairs[i].ref_id);
      const std::size_t r = oracle_ranks(m, i)[m.index_of(pairs[i].target_id)];
      CHECK(r >= c0);
      CHECK(r < end);
    }
  }
}

TEST_CASE("pair matching is deterministic and independent of chunking") {
  const EmbeddingMatrix m = testutil::random_matrix(77, 120, 6);
  const auto a = match_pairs(m, {4, 8, 42}, 7);
  CHECK(a == match_pairs(m, {4, 8, 42}, 256));
  CHECK(a == match_pairs(m, {4, 8, 42}, 1));
  CHECK(a != match_pairs(m, {4, 8, 43}, 7));
}

TEST_CASE("wide windows spread targets across the window") {
  const EmbeddingMatrix m = testutil::random_matrix(5, 64, 4);
  std::set<std::size_t> ranks;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto pairs = match_pairs(m, {2, 6, seed});
    ranks.insert(oracle_ranks(m, 0)[m.index_of(pairs[0].target_id)]);
  }
  CHECK(ranks == std::set<std::size_t>{2, 3, 4, 5});
}

TEST_CASE("templates render byte for byte") {
  const Quadruplet q = quad("r", "a red dress", "t", "a blue gown");
  CHECK(render_modified_text(q, 0) == "a blue gown instead of a red dress");
  CHECK(render_modified_text(q, 1) == "Unlike a red dress, I want a blue gown");
  CHECK(render_modified_text(q, 2) == "a blue gown");
  CHECK(render_modified_text(quad("r", "anything", "t", "a blue gown"), 2) == "a blue gown");
  CHECK_THROWS_AS(render_modified_text(q, 3), UsageError);
  CHECK_THROWS_AS(render_modified_text(quad("r", "", "t", "x"), 0), DataError);
}

TEST_CASE("quadruplets join captions") {
  const std::vector<ImagePair> pairs{{"a", "b"}, {"b", "a"}};
  const std::vector<CaptionRecord> caps{{"a", "cap a", "stub", 2}, {"b", "cap b", "stub", 2}};
  const auto quads = build_quadruplets(pairs, caps);
  CHECK(quads[0].ref_caption == "cap a");
  CHECK(quads[0].target_caption == "cap b");
  CHECK_THROWS_AS(build_quadruplets(std::vector<ImagePair>{{"a", "zz"}}, caps), DataError);
}

TEST_CASE("forge_triplets cardinality and determinism") {
  std::vector<Quadruplet> quads;
  for (int i = 0; i < 10; ++i) {
    quads.push_back(quad("r" + std::to_string(i), "c" + std::to_string(i), "t" + std::to_string(i),
                         "d" + std::to_string(i)));
  }
  const std::vector<int> only2{2};
  const auto all = forge_triplets(quads, only2, 10, 1);
  REQUIRE(all.size() == 10);
  for (const Triplet& t : all) {
    CHECK(t.template_id == 2);
    CHECK(t.provenance == Provenance::generated);
  }

  const std::vector<int> two{0, 1};
  const auto some = forge_triplets(quads, two, 4, 9);
  REQUIRE(some.size() == 8);
  std::set<std::string> refs;
  for (const Triplet& t : some) refs.insert(t.ref_id);
  CHECK(refs.size() == 4);
  CHECK(some[0].template_id == 0);
  CHECK(some[1].template_id == 1);
  CHECK(some[0].ref_id == some[1].ref_id);
  CHECK(some == forge_triplets(quads, two, 4, 9));

  CHECK_THROWS_AS(forge_triplets(quads, std::vector<int>{}, 4, 0), UsageError);
  CHECK_THROWS_AS(forge_triplets(quads, two, 11, 0), UsageError);
  CHECK_THROWS_AS(forge_triplets(quads, std::vector<int>{5}, 1, 0), UsageError);
}

TEST_CASE("triplet invariants") {
  CHECK_NOTHROW(validate_triplet({"a", "m", "b", Provenance::annotated, std::nullopt}));
  CHECK_THROWS_AS(validate_triplet({"a", "m", "a", Provenance::annotated, std::nullopt}), DataError);
  CHECK_THROWS_AS(validate_triplet({"a", "", "b", Provenance::annotated, std::nullopt}), DataError);
  CHECK_THROWS_AS(validate_triplet({"a", "m", "b", Provenance::generated, std::nullopt}), DataError);
  CHECK_THROWS_AS(validate_triplet({"a", "m", "b", Provenance::annotated, 1}), DataError);
}

TEST_CASE("pair and triplet files round trip") {
  testutil::TempDir dir("forge");
  const std::vector<ImagePair> pairs{{"a", "b"}, {"c", "d"}};
  write_pairs(dir / "pairs.jsonl", pairs);
  CHECK(read_pairs(dir / "pairs.jsonl") == pairs);

  const std::vector<Triplet> ts{{"a", "x \"quoted\"", "b", Provenance::annotated, std::nullopt},
                                {"c", "Unlike p, I want q", "d", Provenance::generated, 1}};
  write_triplets(dir / "t.jsonl", ts);
  CHECK(read_triplets(dir / "t.jsonl") == ts);
  const json line = json::parse(R"({"ref_id":"a","modified_text":"m","target_id":"b","provenance":"annotated","template_id":null})");
  CHECK(line.at("template_id").is_null());

  std::ofstream(dir / "bad.jsonl") << R"({"ref_id":"a","modified_text":"m","target_id":"a","provenance":"annotated","template_id":null})"
                                    << "\n";
  try {
    read_triplets(dir / "bad.jsonl");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.jsonl:1") != std::string::npos);
  }
}
