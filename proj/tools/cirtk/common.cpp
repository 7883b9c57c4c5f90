#include "common.hpp"

#include <fmt/format.h>

#include <charconv>
#include <set>

#include "cir/caption.hpp"
#include "cir/error.hpp"
#include "cir/triplet_forge.hpp"

namespace cirtk {
namespace {

std::vector<std::string>& words() {
  static std::vector<std::string> w;
  return w;
}

void put(cir::json& doc, const char* section, const char* key, cir::json value) { doc[section][key] = std::move(value); }

cir::json number_or_string(const std::string& s) {
  cir::json parsed = cir::json::parse(s, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_number()) return s;
  return parsed;
}

cir::json bool_or_string(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  return s;
}

}  // namespace

const std::vector<std::string>& argv_words() { return words(); }

void set_argv_words(int argc, char** argv) { words().assign(argv, argv + argc); }

std::vector<std::string> split_csv(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::size_t end = comma == std::string::npos ? csv.size() : comma;
    std::string item = cir::trim(std::string_view(csv).substr(start, end - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::vector<int> parse_ints(const std::string& csv, const char* flag) {
  std::vector<int> out;
  for (const std::string& item : split_csv(csv)) {
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size()) {
      throw cir::UsageError(fmt::format("{}: \"{}\" is not an integer", flag, item));
    }
    out.push_back(v);
  }
  if (out.empty()) throw cir::UsageError(fmt::format("{}: expected a comma-separated list", flag));
  return out;
}

std::vector<std::size_t> parse_ks(const std::string& csv, const char* flag) {
  std::vector<std::size_t> out;
  for (int v : parse_ints(csv, flag)) {
    if (v < 1) throw cir::UsageError(fmt::format("{}: K must be >= 1", flag));
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw cir::UsageError(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
}

void TrainFlags::attach(CLI::App& cmd, bool with_stage) {
  cmd.add_option("--config", config, "JSON run config with train/data/validation sections");
  if (with_stage) cmd.add_option("--stage", stage, "Training stage: 1 (query + target encoder) or 2 (query encoder, cached negatives)");
  cmd.add_option("--tau", tau, "Softmax temperature (default 0.05)");
  cmd.add_option("--lr", lr, "AdamW learning rate (default 1e-3)");
  cmd.add_option("--weight-decay", weight_decay, "Decoupled weight decay on matrices (default 0.01)");
  cmd.add_option("--batch-size", batch_size, "Triplets per step (default 32)");
  cmd.add_option("--epochs", epochs, "Epochs (default 50 for stage 1, 5 for stage 2)");
  cmd.add_option("--hidden", hidden, "Fusion hidden width; 0 means the embedding dim (default 0)");
  if (with_stage) {
    cmd.add_option("--neg-method", neg_method,
                   "Negative construction: ref_replace, text_replace, target_replace, query_replace or 1-4 "
                   "(default target_replace)");
  }
  cmd.add_option("--seed", seed, "RNG seed (default 0)");
  if (with_stage) cmd.add_option("--neg-pool", neg_pool, "Stage 2: cache rows per softmax, 0 for all (default 0)");
  cmd.add_option("--select-best", select_best, "Keep the epoch with the best validation Rmean: true|false (default true)");
  cmd.add_option("--images", images, "Image embeddings (CIRE); also the candidate corpus");
  cmd.add_option("--texts", texts, "Modified-text embeddings (CIRE) keyed by the modified text");
  cmd.add_option("--triplets", triplets, "Training triplets (JSONL)");
  cmd.add_option("--val-queries", val_queries, "Validation queries (JSONL) for per-epoch Rmean");
  cmd.add_option("--groups", groups, "Groups (JSONL) for subset recall");
  if (with_stage) {
    cmd.add_option("--init", init, "Checkpoint to start from (required for stage 2)");
    cmd.add_option("--cache", cache, "Negative cache built from --init (stage 2)");
  }
  cmd.add_option("--val-convention", val_convention, "Validation Rmean convention: fashioniq|cirr (default fashioniq)");
  cmd.add_option("--val-k", val_k, "Validation recall cutoffs (default 1,5,10,50)");
  cmd.add_option("--val-subset-k", val_subset_k, "Validation subset recall cutoffs (cirr)");
  cmd.add_option("--val-mask-reference", val_mask_reference,
                 "Drop the reference from its own ranking during validation: true|false (default by convention)");
}

cir::json TrainFlags::overrides() const {
  cir::json doc = cir::json::object();
  const auto num = [&](const std::string& v, const char* key) {
    if (!v.empty()) put(doc, "train", key, number_or_string(v));
  };
  num(stage, "stage");
  num(tau, "tau");
  num(lr, "lr");
  num(weight_decay, "weight_decay");
  num(batch_size, "batch_size");
  num(epochs, "epochs");
  num(hidden, "hidden");
  num(seed, "seed");
  num(neg_pool, "neg_pool");
  if (!neg_method.empty()) put(doc, "train", "neg_method", neg_method);
  if (!select_best.empty()) put(doc, "train", "select_best", bool_or_string(select_best));
  const auto path = [&](const std::string& v, const char* key) {
    if (!v.empty()) put(doc, "data", key, v);
  };
  path(images, "images");
  path(texts, "texts");
  path(triplets, "triplets");
  path(val_queries, "val_queries");
  path(groups, "groups");
  path(init, "init");
  path(cache, "cache");
  if (!val_convention.empty()) put(doc, "validation", "convention", val_convention);
  const auto ks = [&](const std::string& v, const char* key) {
    if (v.empty()) return;
    cir::json arr = cir::json::array();
    for (const std::string& item : split_csv(v)) arr.push_back(number_or_string(item));
    put(doc, "validation", key, arr);
  };
  ks(val_k, "ks");
  ks(val_subset_k, "subset_ks");
  if (!val_mask_reference.empty()) put(doc, "validation", "mask_reference", bool_or_string(val_mask_reference));
  return doc;
}

cir::RunConfig TrainFlags::resolve() const {
  cir::json file = cir::json::object();
  if (!config.empty()) {
    try {
      file = cir::read_json_file(config);
    } catch (const cir::Error& e) {
      throw cir::UsageError(e.what());
    }
  }
  std::vector<std::string> errors;
  cir::RunConfig cfg = cir::resolve_run_config(file, overrides(), errors);
  if (!errors.empty()) {
    std::string msg = fmt::format("{} config problem{}:", errors.size(), errors.size() == 1 ? "" : "s");
    for (const std::string& e : errors) msg += "\n  - " + e;
    throw cir::UsageError(msg);
  }
  return cfg;
}

cir::TrainingData LoadedData::view(const cir::RunConfig& cfg) const {
  cir::TrainingData d;
  d.images = &images;
  d.texts = &texts;
  d.triplets = triplets;
  d.validation = validation;
  d.groups = has_groups ? &groups : nullptr;
  d.val = cfg.validation;
  return d;
}

LoadedData load_training_data(const cir::RunConfig& cfg) {
  LoadedData d;
  d.images = cir::normalize_rows(cir::load_embeddings(cfg.data.images));
  d.texts = cir::normalize_rows(cir::load_embeddings(cfg.data.texts));
  d.triplets = cir::read_triplets(cfg.data.triplets);
  if (!cfg.data.val_queries.empty()) d.validation = cir::read_queries(cfg.data.val_queries);
  if (!cfg.data.groups.empty()) {
    d.groups = cir::read_groups(cfg.data.groups);
    d.has_groups = true;
  }
  return d;
}

std::string format_table(const std::vector<std::pair<std::string, const cir::EvalReport*>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::string> headers;
  const cir::EvalReport& first = *rows.front().second;
  for (const auto& [k, _] : first.recall_at) headers.push_back(fmt::format("R@{}", k));
  for (const auto& [k, _] : first.subset_recall_at) headers.push_back(fmt::format("Rs@{}", k));
  headers.push_back("Rmean");
  std::size_t label_width = 5;
  for (const auto& [label, _] : rows) label_width = std::max(label_width, label.size());

  std::string out = fmt::format("{:<{}}", "", label_width);
  for (const std::string& h : headers) out += fmt::format(" {:>8}", h);
  out += '\n';
  for (const auto& [label, report] : rows) {
    out += fmt::format("{:<{}}", label, label_width);
    for (const auto& [_, v] : report->recall_at) out += fmt::format(" {:>8.2f}", 100.0 * v);
    for (const auto& [_, v] : report->subset_recall_at) out += fmt::format(" {:>8.2f}", 100.0 * v);
    out += fmt::format(" {:>8.2f}\n", 100.0 * report->rmean);
  }
  return out;
}

}  // namespace cirtk
