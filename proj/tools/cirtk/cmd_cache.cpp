#include <fmt/format.h>

#include "cir/contrastive.hpp"
#include "cir/manifest.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct CacheArgs {
  std::string checkpoint;
  std::string images;
  std::string out;
};

int run(const CacheArgs& a) {
  const std::filesystem::path out(a.out);
  ensure_dir(out);
  cir::RunManifest manifest("cache", argv_words());
  manifest.add_input("checkpoint", a.checkpoint);
  manifest.add_input("images", a.images);
  cir::Stopwatch sw;
  const cir::Checkpoint ckpt = cir::load_checkpoint(a.checkpoint);
  const cir::EmbeddingMatrix images = cir::normalize_rows(cir::load_embeddings(a.images));
  const cir::NegativeCache cache = cir::cache_targets(ckpt.params, images);
  cir::save_negative_cache(cache, out / "cache.cire");
  manifest.time_phase("cache", sw.seconds());
  manifest.set_config({{"fingerprint", cache.fingerprint}});
  manifest.add_output(out / "cache.cire");
  manifest.add_output(out / "cache.cire.json");
  manifest.write(out);
  fmt::print("cached {} targets (fingerprint {}) -> {}\n", cache.corpus.rows(), cache.fingerprint.substr(0, 12),
             (out / "cache.cire").string());
  return 0;
}

}  // namespace

Runner register_cache(CLI::App& app) {
  auto a = std::make_shared<CacheArgs>();
  CLI::App* cmd = app.add_subcommand("cache", "Encode every candidate image with a checkpoint's frozen target projection");
  cmd->add_option("--checkpoint", a->checkpoint, "Checkpoint (CIRM) whose target projection is frozen")->required();
  cmd->add_option("--images", a->images, "Candidate image embeddings (CIRE)")->required();
  cmd->add_option("--out", a->out, "Output directory for cache.cire and its fingerprint sidecar")->required();
  return [a] { return run(*a); };
}

}  // namespace cirtk
