#pragma once

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cir/jsonl.hpp"
#include "cir/negstudy.hpp"
#include "cir/retrieval.hpp"
#include "cir/run_config.hpp"

namespace cirtk {

using Runner = std::function<int()>;

/// Each register_* adds a subcommand and returns what to run when it was chosen.
Runner register_import(CLI::App& app);
Runner register_forge(CLI::App& app);
Runner register_cache(CLI::App& app);
Runner register_train(CLI::App& app);
Runner register_eval(CLI::App& app);
Runner register_negstudy(CLI::App& app);
Runner register_synthetic(CLI::App& app);

/// The command line as typed, for manifests.
const std::vector<std::string>& argv_words();
void set_argv_words(int argc, char** argv);

std::vector<std::size_t> parse_ks(const std::string& csv, const char* flag);
std::vector<int> parse_ints(const std::string& csv, const char* flag);
std::vector<std::string> split_csv(const std::string& csv);

/// Creates `dir` (and parents) or throws a usage error naming the flag.
void ensure_dir(const std::filesystem::path& dir);

/// Training flags shared by `train` and `negstudy`. Values given on the
/// command line land in `overrides` as a nested config document.
struct TrainFlags {
  std::string config;
  std::string stage, tau, lr, weight_decay, batch_size, epochs, hidden, neg_method, seed, neg_pool, select_best;
  std::string images, texts, triplets, val_queries, groups, init, cache;
  std::string val_convention, val_k, val_subset_k, val_mask_reference;

  void attach(CLI::App& cmd, bool with_stage);
  cir::json overrides() const;
  /// Loads the config file, applies overrides, and throws a usage error
  /// listing every problem found.
  cir::RunConfig resolve() const;
};

struct LoadedData {
  cir::EmbeddingMatrix images;
  cir::EmbeddingMatrix texts;
  std::vector<cir::Triplet> triplets;
  std::vector<cir::EvalQuery> validation;
  cir::Groups groups;
  bool has_groups = false;

  cir::TrainingData view(const cir::RunConfig& cfg) const;
};

/// Reads images/texts/triplets (normalizing embeddings) plus optional
/// validation queries and groups.
LoadedData load_training_data(const cir::RunConfig& cfg);

cir::EvalOptions eval_options(const std::string& convention, const std::string& k, const std::string& subset_k,
                              const std::string& mask_reference);

/// Fixed-width metric table: one header row of metric names, one value row
/// per labelled report. Values are percentages with two decimals.
std::string format_table(const std::vector<std::pair<std::string, const cir::EvalReport*>>& rows);

}  // namespace cirtk
