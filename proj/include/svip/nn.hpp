#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "svip/gradcheck.hpp"
#include "svip/tensor.hpp"

namespace svip {

// Seeded initializer: truncated normal (|z| <= 2) for weights, zeros for
// biases.
class Initializer {
 public:
  Initializer(std::uint64_t seed, double std) : rng_(seed), std_(std) {}

  Tensor truncated_normal(Shape shape);
  Tensor zeros(Shape shape);
  Tensor ones(Shape shape);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  double std_;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear create(Initializer& init, std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams create(Initializer& init, std::size_t width);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace svip
