#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "svip/gradsuite.hpp"
#include "svip/model.hpp"
#include "svip/tensor.hpp"
#include "svip/trainer.hpp"

namespace svip::testing {

inline std::vector<double> uniform(std::mt19937_64& rng, std::size_t n,
                                   double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape,
                            bool requires_grad = true, double lo = -1.0,
                            double hi = 1.0) {
  const auto n = shape_numel(shape);
  return Tensor::from(std::move(shape), uniform(rng, n, lo, hi), requires_grad);
}

// Random point on the probability simplex.
inline std::vector<double> random_distribution(std::mt19937_64& rng,
                                               std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) s += (x = e(rng));
  for (auto& x : p) x /= s;
  return p;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Minimal model with two seen and one unseen class and random inputs.
struct TinySetup {
  ViTConfig vit = minimal_vit();
  TrainConfig cfg = minimal_train();
  AttributeMatrix classes;
  SvipModel model;
  std::vector<Tensor> patches;
  std::vector<int> labels;

  explicit TinySetup(std::uint64_t seed, std::size_t images = 2) {
    std::mt19937_64 rng(seed);
    Matrix attrs(3, vit.num_attributes);
    for (auto& a : attrs.values) a = uniform(rng, 1, 0.1, 1.0)[0];
    classes = AttributeMatrix({0, 1, 2},
                              {Split::kSeen, Split::kSeen, Split::kUnseen}, attrs);
    vit.num_seen_classes = 2;
    model = SvipModel::create(
        vit, random_tensor(rng, {vit.num_attributes, cfg.word_dim}, false), seed);
    for (std::size_t i = 0; i < images; ++i) {
      patches.push_back(patchify(
          random_tensor(rng, {vit.image_size, vit.image_size, vit.channels},
                        false, 0.0, 1.0),
          vit.patch_size));
      labels.push_back(static_cast<int>(i % 2));
    }
  }

  Batch batch() const { return {patches, labels}; }
};

inline double max_abs_grad(const Tensor& t) {
  double g = 0.0;
  if (t.has_grad())
    for (double x : t.grad()) g = std::max(g, std::abs(x));
  return g;
}

}  // namespace svip::testing
