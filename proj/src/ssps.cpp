#include "svip/ssps.hpp"

#include <algorithm>
#include <numeric>

#include "svip/errors.hpp"
#include "svip/ops.hpp"
#include "svip/psc.hpp"

namespace svip {

PatchClassifierParams PatchClassifierParams::create(Initializer& init,
                                                    std::size_t width) {
  return {Linear::create(init, width, width), Linear::create(init, width, 1)};
}

void PatchClassifierParams::collect(std::vector<NamedTensor>& out) const {
  hidden.collect("patch_classifier.hidden", out);
  output.collect("patch_classifier.output", out);
}

Matrix aggregate_attention(const AttentionTrace& trace) {
  if (trace.layers.empty()) {
    throw UsageError("aggregate_attention: empty attention trace");
  }
  Matrix w = trace.layers.front().mean;
  const std::size_t n = w.rows;
  for (std::size_t l = 1; l < trace.layers.size(); ++l) {
    const Matrix& t = trace.layers[l].mean;
    if (t.rows != n || t.cols != n) {
      throw ShapeError("aggregate_attention: layer sizes differ");
    }
    Matrix next = w;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        const double a = w(i, k);
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) next(i, j) += a * t(k, j);
      }
    }
    w = std::move(next);
  }
  return w;
}

std::vector<double> raw_scores(const Matrix& aggregated) {
  if (aggregated.rows == 0 || aggregated.cols < 1) {
    throw UsageError("raw_scores: empty aggregate");
  }
  auto row = aggregated.row(0);
  return {row.begin() + 1, row.end()};
}

std::vector<double> pseudo_scores(const Matrix& aggregated) {
  auto raw = raw_scores(aggregated);
  if (raw.empty()) return raw;
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double min = *lo, range = *hi - *lo;
  for (auto& r : raw) r = range > 0.0 ? (r - min) / range : 0.5;
  return raw;
}

std::vector<double> binarize_top_m(std::span<const double> scores,
                                   std::size_t m) {
  std::vector<double> out(scores.size(), 0.0);
  for (auto i : select_top_m(scores, m).indices) out[i] = 1.0;
  return out;
}

Tensor classify_patches(const Tensor& patch_embeddings,
                        const PatchClassifierParams& params) {
  return ops::sigmoid(params.output(ops::gelu(params.hidden(patch_embeddings))));
}

Tensor patch_loss(const Tensor& predicted, std::span<const double> targets) {
  if (predicted.numel() != targets.size()) {
    throw UsageError("patch_loss: " + std::to_string(predicted.numel()) +
                     " predictions vs " + std::to_string(targets.size()) +
                     " targets");
  }
  if (targets.empty()) throw UsageError("patch_loss: no patches");
  constexpr double kClamp = 1e-7;
  const Shape shape = predicted.shape();
  Tensor p = ops::clamp(predicted, kClamp, 1.0 - kClamp);
  Tensor r = Tensor::from(shape, {targets.begin(), targets.end()});
  std::vector<double> one_minus(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) one_minus[i] = 1.0 - targets[i];
  Tensor q = Tensor::from(shape, std::move(one_minus));
  // log(1 - p) through 1 - p = p * (-1) + 1
  Tensor one_minus_p =
      ops::add(ops::scale(p, -1.0), Tensor::full(shape, 1.0));
  Tensor ll = ops::add(ops::mul(r, ops::log(p)),
                       ops::mul(q, ops::log(one_minus_p)));
  return ops::scale(ops::mean(ll), -1.0);
}

}  // namespace svip
