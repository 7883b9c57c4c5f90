#include "cir/negstudy.hpp"

#include "cir/error.hpp"

namespace cir {

std::vector<NegStudyRow> run_negstudy(const TrainConfig& base, const TrainingData& data,
                                      std::span<const NegativeMethod> methods, std::span<const EvalQuery> test,
                                      const EvalOptions& eval) {
  if (methods.empty()) throw UsageError("negstudy needs at least one method");
  if (base.stage != Stage::one) throw UsageError("negstudy compares stage-one runs");
  std::vector<NegStudyRow> rows;
  for (NegativeMethod m : methods) {
    TrainConfig cfg = base;
    cfg.neg_method = m;
    NegStudyRow row;
    row.method = m;
    row.training = train(cfg, data, nullptr, nullptr);
    row.report = evaluate(row.training.checkpoint.params, test, *data.texts, *data.images, data.groups, eval);
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(std::span<const NegStudyRow> rows) {
  json out = json::array();
  for (const NegStudyRow& r : rows) {
    out.push_back({{"method", to_string(r.method)},
                   {"selected_epoch", r.training.selected_epoch},
                   {"report", to_json(r.report)}});
  }
  return out;
}

}  // namespace cir
