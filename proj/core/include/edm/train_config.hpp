#pragma once

#include <cstddef>
#include <cstdint>

#include "edm/error.hpp"

namespace edm {

/// Optimizer and loop settings shared by the score trainer and the prompt
/// trainer. Adam moment constants default to 0.9 / 0.99.
struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch_size = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double t_min = 1e-3;
  std::uint64_t seed = 0;

  static TrainConfig score_defaults() { return {}; }

  static TrainConfig prompt_defaults() {
    TrainConfig c;
    c.steps = 2000;
    c.learning_rate = 5e-6;
    return c;
  }

  void validate() const {
    if (steps == 0) throw ConfigError("steps must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must be in [0, 1)");
    if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("t_min must be in (0, T)");
  }
};

}  // namespace edm
