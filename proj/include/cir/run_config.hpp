#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cir/jsonl.hpp"
#include "cir/trainer.hpp"

namespace cir {

struct DataPaths {
  std::string images;
  std::string texts;
  std::string triplets;
  std::string val_queries;
  std::string groups;
  std::string init;
  std::string cache;
};

/// Everything a training run reads, as one nested document:
///   {"train": {...TrainConfig...}, "data": {...}, "validation": {...}}
struct RunConfig {
  TrainConfig train;
  DataPaths data;
  ValidationSpec validation;
};

/// Merges `overrides` over `file` (both nested documents of the shape above)
/// over the stage defaults. Every unknown key, mistyped value and violated
/// constraint is appended to `errors`.
RunConfig resolve_run_config(const json& file, const json& overrides, std::vector<std::string>& errors);

json to_json(const RunConfig& cfg);

/// Keys accepted in each section, in documentation order.
const std::vector<std::pair<std::string, std::vector<std::string>>>& run_config_keys();

}  // namespace cir
