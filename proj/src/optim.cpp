#include "svip/optim.hpp"

#include <cmath>

#include "svip/errors.hpp"

namespace svip {

void Optimizer::step(std::span<Tensor> params) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].has_grad()) {
      throw UsageError("optimizer step: parameter " + std::to_string(p) +
                       " has no gradient");
    }
    check_finite(params[p].grad(), "parameter gradient");
  }
  if (config_.kind == OptimizerKind::kAdam && m_.empty()) {
    for (auto& t : params) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }
  if (config_.kind == OptimizerKind::kAdam && m_.size() != params.size()) {
    throw UsageError("optimizer step: parameter list changed between steps");
  }
  ++steps_;
  const double lr = config_.lr;
  const double wd = config_.weight_decay;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].mutable_data();
    auto g = params[p].grad();
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < w.size(); ++i)
        w[i] -= lr * (g[i] + wd * w[i]);
    } else {
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + wd * w[i]);
      }
    }
    check_finite(w, "parameter after optimizer step");
    params[p].zero_grad();
  }
}

}  // namespace svip
