#pragma once

#include <cstdint>
#include <span>

namespace cir {

/// AdamW with decoupled weight decay.
struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// One update for a single tensor. `step` is the 1-based step used for bias
/// correction. Decay is applied only when `decay` is set (matrices, not biases):
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_update(std::span<float> param, std::span<const double> grad, std::span<float> first_moment,
                  std::span<float> second_moment, std::uint64_t step, const AdamWConfig& cfg, bool decay);

}  // namespace cir
