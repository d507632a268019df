#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "svip/errors.hpp"
#include "svip/gradsuite.hpp"
#include "svip/ops.hpp"
#include "svip/ssps.hpp"
#include "svip/trainer.hpp"

using namespace svip;
using svip::testing::max_abs_diff;
using svip::testing::random_distribution;

namespace {

Matrix random_stochastic(std::mt19937_64& rng, std::size_t n) {
  Matrix m(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    auto p = random_distribution(rng, n);
    std::copy(p.begin(), p.end(), m.values.begin() + r * n);
  }
  return m;
}

AttentionTrace trace_of(std::vector<Matrix> layers) {
  AttentionTrace t;
  for (auto& m : layers) t.layers.push_back({{m}, m});
  return t;
}

// Straight-line recurrence in long double, independent of the library.
std::vector<long double> oracle(const std::vector<Matrix>& t) {
  const std::size_t n = t[0].rows;
  std::vector<long double> w(t[0].values.begin(), t[0].values.end());
  for (std::size_t l = 1; l < t.size(); ++l) {
    std::vector<long double> next(w);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0;
        for (std::size_t k = 0; k < n; ++k) s += w[i * n + k] * t[l](k, j);
        next[i * n + j] += s;
      }
    w = std::move(next);
  }
  return w;
}

std::vector<std::size_t> argsort(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n, 1}, std::move(v));
}

}  // namespace

TEST_CASE("aggregation base cases") {
  std::mt19937_64 rng(1);
  auto t1 = random_stochastic(rng, 5);
  CHECK(aggregate_attention(trace_of({t1})) == t1);

  auto w2 = aggregate_attention(trace_of({t1, Matrix::identity(5)}));
  for (std::size_t i = 0; i < 25; ++i) CHECK(w2.values[i] == 2.0 * t1.values[i]);

  CHECK_THROWS_AS(aggregate_attention(AttentionTrace{}), UsageError);
}

TEST_CASE("aggregation matches the recurrence oracle and the row-sum law") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t layers = 1 + rng() % 6, n = 2 + rng() % 15;
    std::vector<Matrix> t;
    for (std::size_t l = 0; l < layers; ++l) t.push_back(random_stochastic(rng, n));
    auto w = aggregate_attention(trace_of(t));
    auto expected = oracle(t);
    double diff = 0.0;
    for (std::size_t i = 0; i < n * n; ++i)
      diff = std::max(diff, double(std::abs(w.values[i] - expected[i])));
    CHECK(diff < 1e-10);
    const double target = std::ldexp(1.0, int(layers) - 1);
    for (std::size_t r = 0; r < n; ++r) {
      auto row = w.row(r);
      CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - target) < 1e-6);
    }
  }
}

TEST_CASE("two-layer worked example") {
  Matrix t1(3, 3), t2(3, 3);
  t1.values = {0.5, 0.25, 0.25, 0.2, 0.6, 0.2, 0.1, 0.1, 0.8};
  t2.values = {0.2, 0.4, 0.4, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5};
  auto w = aggregate_attention(trace_of({t1, t2}));
  // Row 0 of T1 T2 by hand: [0.1 + 0.25, 0.2 + 0.125, 0.2 + 0.125].
  CHECK(w(0, 0) == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(w(0, 1) == doctest::Approx(0.575).epsilon(1e-12));
  CHECK(w(0, 2) == doctest::Approx(0.575).epsilon(1e-12));
  auto raw = raw_scores(w);
  REQUIRE(raw.size() == 2);
  CHECK(raw[0] == doctest::Approx(0.575));
  auto pseudo = pseudo_scores(w);
  CHECK(pseudo == std::vector<double>{0.5, 0.5});
}

TEST_CASE("pseudo scores by min-max") {
  Matrix w(4, 4, 0.1);
  w(0, 0) = 7.0;
  w(0, 1) = 1.0;
  w(0, 2) = 2.0;
  w(0, 3) = 3.0;
  CHECK(pseudo_scores(w) == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(raw_scores(w) == std::vector<double>{1.0, 2.0, 3.0});

  Matrix uniform(5, 5, 0.2);
  for (double p : pseudo_scores(uniform)) CHECK(p == 0.5);
}

TEST_CASE("pseudo scores are invariant to positive scaling of the first layer") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t layers = 1 + trial % 4;
    std::vector<Matrix> t;
    for (std::size_t l = 0; l < layers; ++l) t.push_back(random_stochastic(rng, 8));
    auto scaled = t;
    for (auto& v : scaled[0].values) v *= 3.7;
    const auto a = pseudo_scores(aggregate_attention(trace_of(t)));
    const auto b = pseudo_scores(aggregate_attention(trace_of(scaled)));
    CHECK(argsort(a) == argsort(b));
    CHECK(max_abs_diff(a, b) < 1e-12);
  }
}

TEST_CASE("raising one aggregated score never lowers its pseudo score") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto w = random_stochastic(rng, 7);
    const std::size_t i = 1 + rng() % 6;
    const double before = pseudo_scores(w)[i - 1];
    w(0, i) += svip::testing::uniform(rng, 1, 0.0, 0.5)[0];
    CHECK(pseudo_scores(w)[i - 1] >= before);
  }
}

TEST_CASE("binarized targets follow the top-M rule") {
  const std::vector<double> s{0.2, 0.9, 0.2, 0.5};
  CHECK(binarize_top_m(s, 2) == std::vector<double>{0, 1, 0, 1});
  CHECK(binarize_top_m(s, 3) == std::vector<double>{1, 1, 0, 1});
}

TEST_CASE("patch classifier outputs") {
  Initializer init(5, 0.3);
  auto params = PatchClassifierParams::create(init, 64);
  std::mt19937_64 rng(5);
  auto v = svip::testing::random_tensor(rng, {49, 64}, false);
  auto out = classify_patches(v, params);
  CHECK(out.shape() == Shape{49, 1});
  for (double x : out.data()) CHECK((x > 0.0 && x < 1.0));
  auto again = classify_patches(v, params);
  CHECK(max_abs_diff(out.data(), again.data()) == 0.0);

  for (auto* t : {&params.output.weight, &params.output.bias}) {
    auto d = t->mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
  auto half = classify_patches(v, params);
  for (double x : half.data()) CHECK(x == 0.5);
}

TEST_CASE("patch loss examples") {
  const double eps = 1e-9;
  CHECK(patch_loss(column({1 - eps, eps, 1 - eps}), std::vector<double>{1, 0, 1})
            .item() < 1e-5);
  CHECK(patch_loss(column({0.5}), std::vector<double>{1}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(patch_loss(column({0.5}), std::vector<double>{0.5}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // Clamped rather than infinite.
  CHECK(std::isfinite(patch_loss(column({0.0}), std::vector<double>{1}).item()));
  CHECK_THROWS_AS(patch_loss(column({0.5, 0.5}), std::vector<double>{1}),
                  UsageError);
}

TEST_CASE("patch loss reaches only the patch classifier") {
  svip::testing::TinySetup t(6, 1);
  auto& model = t.model;
  const auto& patches = t.patches[0];
  const auto& classes = t.classes;
  const auto& cfg = t.cfg;
  PinnedSample pinned;
  auto s = sample_loss(model, patches, 0, classes, cfg, nullptr, &pinned);
  REQUIRE(s.patch);
  for (auto& p : model.named_parameters()) p.tensor.zero_grad();
  s.patch->backward();
  for (const auto& p : model.named_parameters()) {
    CAPTURE(p.name);
    const double g = svip::testing::max_abs_grad(p.tensor);
    if (parameter_group(p.name) == "patch_classifier") {
      CHECK(g > 0.0);
    } else {
      CHECK(g == 0.0);
    }
  }

  // Finite differences on backbone weights with targets and inputs pinned.
  std::vector<NamedTensor> named;
  model.backbone.collect(named);
  auto report = grad_check(
      [&] {
        auto again = sample_loss(model, patches, 0, classes, cfg, nullptr, &pinned);
        return *again.patch;
      },
      named);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.max_abs_analytic == 0.0);
    CHECK(e.max_rel_error < 1e-4);
  }
}
