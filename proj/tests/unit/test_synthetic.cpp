#include <doctest.h>

#include <set>

#include "cir/error.hpp"
#include "cir/synthetic.hpp"
#include "test_util.hpp"

using namespace cir;

TEST_CASE("default dataset shape") {
  SyntheticConfig cfg;
  cfg.seed = 1;
  const SyntheticDataset ds = make_synthetic(cfg);
  CHECK(ds.images.rows() == 2000);
  CHECK(ds.images.dim() == 32);
  CHECK(ds.images.normalized());
  CHECK(ds.texts.rows() == cfg.vocabulary);
  CHECK(ds.train.size() == 500);
  CHECK(ds.val.size() == 100);
  CHECK(ds.test.size() == 400);
  for (const EvalQuery& q : ds.test) {
    const auto& members = ds.groups.at(*q.group_id);
    CHECK(members.size() == 6);
    CHECK(members[0] == q.ref_id);
    CHECK(members[1] == q.target_id);
    CHECK(std::set<std::string>(members.begin(), members.end()).size() == 6);
  }
}

TEST_CASE("generation is a function of the seed") {
  SyntheticConfig cfg;
  cfg.triplets = 50;
  cfg.train = 30;
  cfg.val = 10;
  cfg.seed = 9;
  const SyntheticDataset a = make_synthetic(cfg), b = make_synthetic(cfg);
  CHECK(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
  CHECK(a.train == b.train);
  cfg.seed = 10;
  const SyntheticDataset c = make_synthetic(cfg);
  CHECK(!std::equal(a.images.data().begin(), a.images.data().end(), c.images.data().begin()));
}

TEST_CASE("targets sit near reference plus modification") {
  SyntheticConfig cfg;
  cfg.triplets = 200;
  cfg.train = 100;
  cfg.val = 50;
  cfg.vocabulary = 0;
  cfg.rotate_text = false;
  cfg.text_bias = 0.0;
  cfg.scale_min = cfg.scale_max = 1.0;
  cfg.seed = 3;
  const SyntheticDataset ds = make_synthetic(cfg);
  CHECK(ds.texts.rows() == 200);
  double worst = 1.0;
  for (const Triplet& t : ds.train) {
    const auto r = ds.images.row(ds.images.index_of(t.ref_id));
    const auto m = ds.texts.row(ds.texts.index_of(t.modified_text));
    const auto g = ds.images.row(ds.images.index_of(t.target_id));
    double dot = 0, norm = 0;
    for (std::size_t k = 0; k < 32; ++k) {
      const double s = double(r[k]) + m[k];
      dot += s * g[k];
      norm += s * s;
    }
    worst = std::min(worst, dot / std::sqrt(norm));
  }
  CHECK(worst > 0.8);
}

TEST_CASE("files and errors") {
  SyntheticConfig cfg;
  cfg.triplets = 20;
  cfg.train = 10;
  cfg.val = 5;
  cfg.seed = 4;
  const SyntheticDataset ds = make_synthetic(cfg);
  testutil::TempDir dir("synthetic");
  write_synthetic(ds, dir.path());
  CHECK(load_embeddings(dir / "images.cire").ids() == ds.images.ids());
  CHECK(read_triplets(dir / "train.jsonl") == ds.train);
  CHECK(read_queries(dir / "test.jsonl").size() == 5);
  CHECK(read_groups(dir / "groups.jsonl").size() == 10);

  SyntheticConfig bad = cfg;
  bad.train = 20;
  CHECK_THROWS_AS(make_synthetic(bad), UsageError);
  bad = cfg;
  bad.scale_min = 0;
  CHECK_THROWS_AS(make_synthetic(bad), UsageError);
  bad = cfg;
  bad.group_size = 1;
  CHECK_THROWS_AS(make_synthetic(bad), UsageError);
}
