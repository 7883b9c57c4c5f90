#include <fmt/format.h>

#include "cir/error.hpp"
#include "cir/hash.hpp"
#include "cir/manifest.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct EvalArgs {
  std::string checkpoint;
  std::string queries;
  std::string texts;
  std::string images;
  std::string groups;
  std::string convention = "fashioniq";
  std::string k;
  std::string subset_k;
  std::string mask_reference;
  std::string out;
};

}  // namespace

cir::EvalOptions eval_options(const std::string& convention, const std::string& k, const std::string& subset_k,
                              const std::string& mask_reference) {
  cir::EvalOptions opts;
  opts.convention = cir::parse_convention(convention);
  if (!k.empty()) {
    opts.ks = parse_ks(k, "--k");
  } else if (opts.convention == cir::Convention::cirr) {
    opts.ks = {1, 5, 10, 50};
  }
  if (!subset_k.empty()) {
    opts.subset_ks = parse_ks(subset_k, "--subset-k");
  } else if (opts.convention == cir::Convention::cirr) {
    opts.subset_ks = {1, 2, 3};
  }
  if (mask_reference == "true") {
    opts.mask_reference = true;
  } else if (mask_reference == "false") {
    opts.mask_reference = false;
  } else if (!mask_reference.empty()) {
    throw cir::UsageError("--mask-reference must be true or false");
  }
  return opts;
}

namespace {

int run(const EvalArgs& a) {
  const cir::EvalOptions opts = eval_options(a.convention, a.k, a.subset_k, a.mask_reference);
  if (!opts.subset_ks.empty() && a.groups.empty()) {
    throw cir::UsageError("subset recall needs --groups");
  }
  const std::filesystem::path out(a.out);
  cir::RunManifest manifest("eval", argv_words());
  manifest.add_input("checkpoint", a.checkpoint);
  manifest.add_input("queries", a.queries);
  manifest.add_input("texts", a.texts);
  manifest.add_input("images", a.images);
  if (!a.groups.empty()) manifest.add_input("groups", a.groups);

  cir::Stopwatch sw;
  const cir::Checkpoint ckpt = cir::load_checkpoint(a.checkpoint);
  const std::vector<cir::EvalQuery> queries = cir::read_queries(a.queries);
  if (queries.empty()) throw cir::DataError(a.queries + ": no queries");
  const cir::EmbeddingMatrix texts = cir::normalize_rows(cir::load_embeddings(a.texts));
  const cir::EmbeddingMatrix images = cir::normalize_rows(cir::load_embeddings(a.images));
  std::optional<cir::Groups> groups;
  if (!a.groups.empty()) groups = cir::read_groups(a.groups);
  manifest.time_phase("load", sw.seconds());

  sw = cir::Stopwatch();
  cir::EvalReport report = cir::evaluate(ckpt.params, queries, texts, images, groups ? &*groups : nullptr, opts);
  report.checkpoint_fingerprint = cir::sha256_file(a.checkpoint);
  manifest.time_phase("eval", sw.seconds());

  cir::json doc = cir::to_json(report);
  doc["config"] = {{"convention", cir::to_string(opts.convention)},
                   {"ks", opts.ks},
                   {"subset_ks", opts.subset_ks},
                   {"mask_reference", report.masked_reference}};
  manifest.set_config(doc["config"]);
  ensure_dir(out);
  cir::write_json_file(out / "report.json", doc);
  manifest.add_output(out / "report.json");
  manifest.write(out);

  std::vector<std::pair<std::string, const cir::EvalReport*>> rows;
  std::vector<cir::EvalReport> split_reports;
  if (report.per_split.size() > 1) {
    for (const auto& [split, recall] : report.per_split) {
      cir::EvalReport r;
      r.recall_at = recall;
      r.rmean = cir::rmean(recall, {}, cir::Convention::fashioniq);
      split_reports.push_back(std::move(r));
    }
    std::size_t i = 0;
    for (const auto& [split, _] : report.per_split) rows.emplace_back(split, &split_reports[i++]);
  }
  rows.emplace_back(report.per_split.size() > 1 ? "average" : "all", &report);
  fmt::print("{}", format_table(rows));
  fmt::print("{} queries, reference {}\n", report.n_queries, report.masked_reference ? "masked" : "ranked");
  return 0;
}

}  // namespace

Runner register_eval(CLI::App& app) {
  auto a = std::make_shared<EvalArgs>();
  CLI::App* cmd = app.add_subcommand("eval", "Recall@K, subset recall and Rmean of a checkpoint");
  cmd->add_option("--checkpoint", a->checkpoint, "Checkpoint (CIRM)")->required();
  cmd->add_option("--queries", a->queries, "Queries (JSONL) with ref_id, text_id, target_id, group_id")->required();
  cmd->add_option("--texts", a->texts, "Modified-text embeddings (CIRE) keyed by text_id")->required();
  cmd->add_option("--images", a->images, "Candidate image embeddings (CIRE)")->required();
  cmd->add_option("--groups", a->groups, "Groups (JSONL); required for subset recall");
  cmd->add_option("--convention", a->convention, "Rmean convention: fashioniq or cirr")->capture_default_str();
  cmd->add_option("--k", a->k, "Recall cutoffs (default 10,50; 1,5,10,50 for cirr)");
  cmd->add_option("--subset-k", a->subset_k, "Subset recall cutoffs (default 1,2,3 for cirr)");
  cmd->add_option("--mask-reference", a->mask_reference, "Drop each reference from its own ranking: true|false (default by convention)");
  cmd->add_option("--out", a->out, "Output directory for report.json and manifest.json")->required();
  return [a] { return run(*a); };
}

}  // namespace cirtk
