#include "cir/adamw.hpp"

#include <cmath>

#include "cir/error.hpp"

namespace cir {

void adamw_update(std::span<float> param, std::span<const double> grad, std::span<float> first_moment,
                  std::span<float> second_moment, std::uint64_t step, const AdamWConfig& cfg, bool decay) {
  if (param.size() != grad.size() || param.size() != first_moment.size() || param.size() != second_moment.size()) {
    throw UsageError("adamw: parameter/gradient/moment size mismatch");
  }
  if (step == 0) throw UsageError("adamw: step counter starts at 1");
  const double s = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, s);
  const double bc2 = 1.0 - std::pow(cfg.beta2, s);
  const double lr = cfg.learning_rate;
  const double shrink = decay ? 1.0 - lr * cfg.weight_decay : 1.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double m = cfg.beta1 * first_moment[i] + (1.0 - cfg.beta1) * g;
    const double v = cfg.beta2 * second_moment[i] + (1.0 - cfg.beta2) * g * g;
    first_moment[i] = static_cast<float>(m);
    second_moment[i] = static_cast<float>(v);
    const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
    param[i] = static_cast<float>(static_cast<double>(param[i]) * shrink - lr * update);
  }
}

}  // namespace cir
