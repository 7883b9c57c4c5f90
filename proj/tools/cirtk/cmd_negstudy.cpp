#include <fmt/format.h>

#include "cir/error.hpp"
#include "cir/manifest.hpp"
#include "common.hpp"

namespace cirtk {
namespace {

struct NegStudyArgs {
  TrainFlags flags;
  std::string methods = "1,2,3,4";
  std::string queries;
  std::string convention = "fashioniq";
  std::string k;
  std::string mask_reference;
  std::string out;
};

int run(NegStudyArgs& a) {
  std::vector<cir::NegativeMethod> methods;
  for (const std::string& m : split_csv(a.methods)) methods.push_back(cir::parse_negative_method(m));
  if (methods.empty()) throw cir::UsageError("--methods must name at least one method");
  const cir::EvalOptions opts = eval_options(a.convention, a.k.empty() ? "1,5,10,50" : a.k, "", a.mask_reference);
  if (opts.convention == cir::Convention::cirr) throw cir::UsageError("negstudy reports R@K; use --convention fashioniq");
  const cir::RunConfig cfg = a.flags.resolve();

  const std::filesystem::path out(a.out);
  ensure_dir(out);
  cir::RunManifest manifest("negstudy", argv_words());
  cir::json config = cir::to_json(cfg);
  config["methods"] = cir::json::array();
  for (cir::NegativeMethod m : methods) config["methods"].push_back(cir::to_string(m));
  config["eval"] = {{"queries", a.queries}, {"ks", opts.ks}, {"mask_reference", opts.mask_reference ? cir::json(*opts.mask_reference) : cir::json()}};
  manifest.set_config(config);
  manifest.set_seed(cfg.train.seed);
  manifest.add_input("images", cfg.data.images);
  manifest.add_input("texts", cfg.data.texts);
  manifest.add_input("triplets", cfg.data.triplets);
  manifest.add_input("queries", a.queries);

  const LoadedData data = load_training_data(cfg);
  const std::vector<cir::EvalQuery> test = cir::read_queries(a.queries);
  if (test.empty()) throw cir::DataError(a.queries + ": no queries");
  cir::Stopwatch sw;
  const std::vector<cir::NegStudyRow> rows = cir::run_negstudy(cfg.train, data.view(cfg), methods, test, opts);
  manifest.time_phase("negstudy", sw.seconds());

  cir::write_json_file(out / "negstudy.json", cir::to_json(rows));
  manifest.add_output(out / "negstudy.json");
  manifest.write(out);

  std::vector<std::pair<std::string, const cir::EvalReport*>> table;
  for (const cir::NegStudyRow& r : rows) {
    table.emplace_back(fmt::format("{}:{}", static_cast<int>(r.method) + 1, cir::to_string(r.method)), &r.report);
  }
  fmt::print("{}", format_table(table));
  return 0;
}

}  // namespace

Runner register_negstudy(CLI::App& app) {
  auto a = std::make_shared<NegStudyArgs>();
  CLI::App* cmd = app.add_subcommand("negstudy", "Train one stage-1 model per negative construction method and compare recall");
  a->flags.attach(*cmd, false);
  cmd->add_option("--methods", a->methods, "Methods to compare, by name or number 1-4")->capture_default_str();
  cmd->add_option("--queries", a->queries, "Test queries (JSONL) scored for every method")->required();
  cmd->add_option("--convention", a->convention, "Rmean convention (fashioniq)")->capture_default_str();
  cmd->add_option("--k", a->k, "Recall cutoffs (default 1,5,10,50)");
  cmd->add_option("--mask-reference", a->mask_reference, "Drop each reference from its own ranking: true|false");
  cmd->add_option("--out", a->out, "Output directory for negstudy.json and manifest.json")->required();
  cmd->footer("Training flags and --config behave as in `cirtk train`; the run is always stage 1.");
  return [a] { return run(*a); };
}

}  // namespace cirtk
