#include "svip/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "svip/errors.hpp"

namespace svip {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::vector<NamedTensor> params, double epsilon) {
  if (!(epsilon > 0.0)) throw UsageError("grad_check: epsilon must be > 0");

  auto eval = [&](const char* what) {
    const double v = loss_fn().item();
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("grad_check: non-finite loss during ") +
                           what);
    }
    return v;
  };

  for (auto& p : params) {
    if (!p.tensor.requires_grad()) {
      throw UsageError("grad_check: parameter " + p.name +
                       " does not require grad");
    }
    p.tensor.zero_grad();
  }
  Tensor loss = loss_fn();
  check_finite(loss.data(), "grad_check loss");
  loss.backward();

  GradCheckReport report;
  for (auto& p : params) {
    GradCheckEntry entry;
    entry.name = p.name;
    std::vector<double> analytic(p.tensor.numel(), 0.0);
    if (p.tensor.has_grad()) {
      std::copy(p.tensor.grad().begin(), p.tensor.grad().end(),
                analytic.begin());
    }
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + epsilon;
      const double plus = eval("forward perturbation");
      w[i] = orig - epsilon;
      const double minus = eval("backward perturbation");
      w[i] = orig;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double a = analytic[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      entry.max_abs_analytic = std::max(entry.max_abs_analytic, std::abs(a));
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    p.tensor.zero_grad();
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace svip
