#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svip/tensor.hpp"

namespace svip {

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// Plain SGD or Adam over a fixed, ordered parameter list. Moment buffers are
// keyed by position in that list, so callers must pass the same list each step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Updates every parameter in place, then zeroes its gradient. Throws
  // UsageError if a parameter has no gradient buffer and NumericalError if an
  // update produces a non-finite value.
  void step(std::span<Tensor> params);

  std::uint64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace svip
