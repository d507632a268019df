#include "svip/nn.hpp"

#include "svip/ops.hpp"

namespace svip {

Tensor Initializer::truncated_normal(Shape shape) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) {
    double z;
    do {
      z = normal(rng_);
    } while (z < -2.0 || z > 2.0);
    v = z * std_;
  }
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor Initializer::zeros(Shape shape) {
  return Tensor::zeros(std::move(shape), true);
}

Tensor Initializer::ones(Shape shape) {
  return Tensor::full(std::move(shape), 1.0, true);
}

Linear Linear::create(Initializer& init, std::size_t in, std::size_t out) {
  return {init.truncated_normal({in, out}), init.zeros({out})};
}

Tensor Linear::operator()(const Tensor& x) const {
  return ops::add_bias(ops::matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix,
                     std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::create(Initializer& init, std::size_t width) {
  return {init.ones({width}), init.zeros({width})};
}

Tensor LayerNormParams::operator()(const Tensor& x) const {
  return ops::layer_norm(x, gamma, beta);
}

void LayerNormParams::collect(const std::string& prefix,
                              std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

}  // namespace svip
