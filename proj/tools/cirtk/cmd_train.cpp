#include <fmt/format.h>

#include "cir/contrastive.hpp"
#include "cir/error.hpp"
#include "cir/manifest.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct TrainArgs {
  TrainFlags flags;
  bool build_cache = false;
  std::string out;
};

cir::json epoch_json(const cir::EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"step", r.step},
          {"loss", r.loss},
          {"val_rmean", r.val_rmean ? cir::json(*r.val_rmean) : cir::json()},
          {"stage", static_cast<int>(r.stage)}};
}

int run(TrainArgs& a) {
  const cir::RunConfig cfg = a.flags.resolve();
  const bool stage_two = cfg.train.stage == cir::Stage::two;
  if (stage_two && cfg.data.cache.empty() && !a.build_cache) {
    throw cir::UsageError("--stage 2 requires --cache or --build-cache");
  }
  if (a.build_cache && !stage_two) throw cir::UsageError("--build-cache applies to stage 2 only");
  if (a.build_cache && !cfg.data.cache.empty()) throw cir::UsageError("give either --cache or --build-cache, not both");

  const std::filesystem::path out(a.out);
  ensure_dir(out);
  cir::RunManifest manifest("train", argv_words());
  manifest.set_config(cir::to_json(cfg));
  manifest.set_seed(cfg.train.seed);
  manifest.add_input("images", cfg.data.images);
  manifest.add_input("texts", cfg.data.texts);
  manifest.add_input("triplets", cfg.data.triplets);
  if (!cfg.data.val_queries.empty()) manifest.add_input("val_queries", cfg.data.val_queries);
  if (!cfg.data.groups.empty()) manifest.add_input("groups", cfg.data.groups);

  cir::Stopwatch sw;
  const LoadedData data = load_training_data(cfg);
  std::optional<cir::Checkpoint> init;
  if (!cfg.data.init.empty()) {
    manifest.add_input("init", cfg.data.init);
    init = cir::load_checkpoint(cfg.data.init);
  }
  std::optional<cir::NegativeCache> cache;
  if (!cfg.data.cache.empty()) {
    manifest.add_input("cache", cfg.data.cache);
    cache = cir::load_negative_cache(cfg.data.cache);
  } else if (a.build_cache) {
    cache = cir::cache_targets(init->params, data.images);
    cir::save_negative_cache(*cache, out / "cache.cire");
    manifest.add_output(out / "cache.cire");
    manifest.add_output(out / "cache.cire.json");
  }
  manifest.time_phase("load", sw.seconds());

  sw = cir::Stopwatch();
  const cir::TrainResult result =
      cir::train(cfg.train, data.view(cfg), init ? &*init : nullptr, cache ? &*cache : nullptr);
  manifest.time_phase("train", sw.seconds());

  cir::save_checkpoint(result.checkpoint, out / "model.cirm");
  std::vector<cir::json> lines{{{"resolved_config", cir::to_json(cfg)}}};
  for (const cir::EpochRecord& r : result.log) {
    lines.push_back(epoch_json(r));
    fmt::print("epoch {:>3}  step {:>6}  loss {:.6f}", r.epoch, r.step, r.loss);
    if (r.val_rmean) fmt::print("  val_rmean {:.2f}", 100.0 * *r.val_rmean);
    fmt::print("\n");
  }
  cir::write_jsonl(out / "metrics.jsonl", lines);
  manifest.add_output(out / "model.cirm");
  manifest.add_output(out / "metrics.jsonl");
  manifest.write(out);
  fmt::print("selected epoch {} -> {}\n", result.selected_epoch, (out / "model.cirm").string());
  return 0;
}

}  // namespace

Runner register_train(CLI::App& app) {
  auto a = std::make_shared<TrainArgs>();
  CLI::App* cmd = app.add_subcommand("train", "Run stage-1 or stage-2 contrastive training");
  a->flags.attach(*cmd, true);
  cmd->add_flag("--build-cache", a->build_cache, "Stage 2: build the negative cache from --init into the output directory");
  cmd->add_option("--out", a->out, "Output directory for model.cirm, metrics.jsonl and manifest.json")->required();
  cmd->footer(
      "Flags override --config values, which override defaults. The config file is JSON:\n"
      "  {\"train\": {stage, tau, lr, weight_decay, batch_size, epochs, hidden, neg_method, seed, neg_pool, select_best},\n"
      "   \"data\": {images, texts, triplets, val_queries, groups, init, cache},\n"
      "   \"validation\": {convention, ks, subset_ks, mask_reference}}");
  return [a] { return run(*a); };
}

}  // namespace cirtk
