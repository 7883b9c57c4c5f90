#pragma once

#include <vector>

#include "cir/retrieval.hpp"
#include "cir/trainer.hpp"

namespace cir {

struct NegStudyRow {
  NegativeMethod method = NegativeMethod::target_replace;
  EvalReport report;
  TrainResult training;
};

/// Trains one stage-one model per method from the same config and seed and
/// evaluates each on `test` against the target-encoded image corpus.
std::vector<NegStudyRow> run_negstudy(const TrainConfig& base, const TrainingData& data,
                                      std::span<const NegativeMethod> methods, std::span<const EvalQuery> test,
                                      const EvalOptions& eval);

json to_json(std::span<const NegStudyRow> rows);

}  // namespace cir
