#include <fmt/format.h>

#include "cir/manifest.hpp"
#include "cir/synthetic.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

int run(const cir::SyntheticConfig& cfg, const std::string& out_dir) {
  const std::filesystem::path out(out_dir);
  ensure_dir(out);
  cir::RunManifest manifest("make-synthetic", argv_words());
  manifest.set_seed(cfg.seed);
  manifest.set_config({{"triplets", cfg.triplets},
                       {"dim", cfg.dim},
                       {"noise", cfg.noise},
                       {"scale_min", cfg.scale_min},
                       {"scale_max", cfg.scale_max},
                       {"text_bias", cfg.text_bias},
                       {"image_bias", cfg.image_bias},
                       {"rotate_text", cfg.rotate_text},
                       {"vocabulary", cfg.vocabulary},
                       {"train", cfg.train},
                       {"val", cfg.val},
                       {"group_size", cfg.group_size}});
  cir::Stopwatch sw;
  const cir::SyntheticDataset ds = cir::make_synthetic(cfg);
  cir::write_synthetic(ds, out);
  manifest.time_phase("generate", sw.seconds());
  for (const char* f : {"images.cire", "texts.cire", "train.jsonl", "val.jsonl", "test.jsonl", "groups.jsonl"}) {
    manifest.add_output(out / f);
  }
  manifest.write(out);
  fmt::print("{} images, {} train / {} val / {} test -> {}\n", ds.images.rows(), ds.train.size(), ds.val.size(),
             ds.test.size(), out.string());
  return 0;
}

}  // namespace

Runner register_synthetic(CLI::App& app) {
  auto cfg = std::make_shared<cir::SyntheticConfig>();
  auto out = std::make_shared<std::string>();
  CLI::App* cmd = app.add_subcommand("make-synthetic", "Write the separable synthetic dataset");
  cmd->group("");
  cmd->add_option("--triplets", cfg->triplets, "Triplets (images = 2 x triplets)")->capture_default_str();
  cmd->add_option("--dim", cfg->dim, "Embedding dim")->capture_default_str();
  cmd->add_option("--noise", cfg->noise, "Per-coordinate target noise")->capture_default_str();
  cmd->add_option("--scale-min", cfg->scale_min, "Smallest modification scale")->capture_default_str();
  cmd->add_option("--scale-max", cfg->scale_max, "Largest modification scale")->capture_default_str();
  cmd->add_option("--text-bias", cfg->text_bias, "Shared direction added to every text embedding")->capture_default_str();
  cmd->add_option("--image-bias", cfg->image_bias, "Shared direction added to every reference")->capture_default_str();
  cmd->add_option("--rotate-text", cfg->rotate_text, "Rotate modifications before they become text embeddings")->capture_default_str();
  cmd->add_option("--vocabulary", cfg->vocabulary, "Distinct modifications shared across triplets; 0 draws one per triplet")
      ->capture_default_str();
  cmd->add_option("--train", cfg->train, "Training triplets")->capture_default_str();
  cmd->add_option("--val", cfg->val, "Validation queries; the rest are test queries")->capture_default_str();
  cmd->add_option("--group-size", cfg->group_size, "Members per subset-recall group")->capture_default_str();
  cmd->add_option("--seed", cfg->seed, "RNG seed")->capture_default_str();
  cmd->add_option("--out", *out, "Output directory")->required();
  return [cfg, out] { return run(*cfg, *out); };
}

}  // namespace cirtk
