#pragma once

#include <functional>
#include <string>
#include <vector>

#include "svip/tensor.hpp"

namespace svip {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_analytic = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

// Central finite differences against the analytic gradient of a scalar loss.
// Relative error per element is |a - n| / max(|a|, |n|, 1e-8). loss_fn must
// rebuild its graph from the current parameter values on every call.
// Parameter values are restored before return.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedTensor> params,
                           double epsilon = 1e-5);

}  // namespace svip
