#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "support.hpp"
#include "svip/errors.hpp"
#include "svip/gradcheck.hpp"
#include "svip/ops.hpp"
#include "svip/optim.hpp"

using namespace svip;
using svip::testing::max_abs_diff;
using svip::testing::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) {
  auto d = t.data();
  return {d.begin(), d.end()};
}

// Triple loop accumulated in long double.
std::vector<double> matmul_oracle(const std::vector<double>& a,
                                  const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t p = 0; p < k; ++p)
        acc += static_cast<long double>(a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<double>(acc);
    }
  return c;
}

// Scalar loss sum(w * f(x)) with fixed random weights w.
Tensor weighted(const Tensor& y, const Tensor& w) {
  return ops::sum(ops::mul(y, w));
}

}  // namespace

TEST_CASE("matmul examples") {
  auto i2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(ops::matmul(i2, m)) == std::vector<double>{1, 2, 3, 4});
  auto p = Tensor::from({2, 2}, {0, 1, 1, 0});
  CHECK(values(ops::matmul(i2, p)) == std::vector<double>{0, 1, 1, 0});
}

TEST_CASE("matmul matches a triple-loop oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = svip::testing::uniform(rng, 9, -5, 5);
    auto b = svip::testing::uniform(rng, 9, -5, 5);
    auto c = ops::matmul(Tensor::from({3, 3}, a), Tensor::from({3, 3}, b));
    CHECK(max_abs_diff(c.data(), matmul_oracle(a, b, 3, 3, 3)) < 1e-12);
  }
  auto a = svip::testing::uniform(rng, 5 * 7);
  auto b = svip::testing::uniform(rng, 7 * 4);
  auto c = ops::matmul(Tensor::from({5, 7}, a), Tensor::from({7, 4}, b));
  CHECK(max_abs_diff(c.data(), matmul_oracle(a, b, 5, 7, 4)) < 1e-12);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                  ShapeError);
}

TEST_CASE("softmax examples") {
  auto s = ops::softmax(Tensor::from({1, 2}, {0, 0}), 1);
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  s = ops::softmax(Tensor::from({1, 2}, {std::numbers::ln2, 0}), 1);
  CHECK(std::abs(s.at(0) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(s.at(1) - 1.0 / 3.0) < 1e-12);
  s = ops::softmax(Tensor::from({1, 2}, {1000, 0}), 1);
  CHECK(std::isfinite(s.at(0)));
  CHECK(s.at(0) == doctest::Approx(1.0));
  CHECK(s.at(1) < 1e-300);
}

TEST_CASE("softmax slices sum to one and ignore constant shifts") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto x = svip::testing::uniform(rng, 12, -20, 20);
    for (std::size_t axis : {0u, 1u}) {
      auto s = ops::softmax(Tensor::from({3, 4}, x), axis);
      if (axis == 1) {
        for (std::size_t r = 0; r < 3; ++r) {
          double t = 0;
          for (std::size_t c = 0; c < 4; ++c) t += s.at(r, c);
          CHECK(std::abs(t - 1.0) < 1e-9);
        }
      } else {
        for (std::size_t c = 0; c < 4; ++c) {
          double t = 0;
          for (std::size_t r = 0; r < 3; ++r) t += s.at(r, c);
          CHECK(std::abs(t - 1.0) < 1e-9);
        }
      }
    }
    auto shifted = x;
    for (std::size_t c = 0; c < 4; ++c) shifted[c] += 37.5;  // row 0
    auto a = ops::softmax(Tensor::from({3, 4}, x), 1);
    auto b = ops::softmax(Tensor::from({3, 4}, shifted), 1);
    CHECK(max_abs_diff(a.data(), b.data()) < 1e-9);
  }
  CHECK_THROWS_AS(ops::softmax(Tensor::zeros({2, 2}), 2), ShapeError);
}

TEST_CASE("grad_check examples") {
  auto x = Tensor::from({1}, {3.0}, true);
  auto r = grad_check([&] { return ops::mul(x, x); }, {{"x", x}});
  CHECK(r.max_rel_error() < 1e-6);
  x.zero_grad();
  ops::mul(x, x).backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  std::mt19937_64 rng(5);
  auto v = random_tensor(rng, {1, 6});
  auto sum_softmax = [&] { return ops::sum(ops::softmax(v, 1)); };
  sum_softmax().backward();
  for (double g : v.grad()) CHECK(std::abs(g) < 1e-12);
  auto report = grad_check(sum_softmax, {{"v", v}});
  CHECK(report.entries[0].max_abs_analytic < 1e-12);
}

TEST_CASE("grad_check reports non-finite losses") {
  auto x = Tensor::from({1}, {1.0}, true);
  CHECK_THROWS_AS(grad_check(
                      [&] {
                        set_op_finite_checks(false);
                        auto y = ops::scale(x, INFINITY);
                        set_op_finite_checks(true);
                        return y;
                      },
                      {{"x", x}}),
                  NumericalError);
}

TEST_CASE("every primitive passes a finite-difference check at random points") {
  std::mt19937_64 rng(2024);
  using Build = std::function<Tensor(const std::vector<Tensor>&)>;
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    Build f;
    double lo = -1.0, hi = 1.0;
  };
  const std::size_t rows01[] = {0, 2, 2};
  const std::vector<Case> cases = {
      {"matmul", {{3, 4}, {4, 2}}, [](auto& t) { return ops::matmul(t[0], t[1]); }},
      {"matmul_nt", {{3, 4}, {2, 4}}, [](auto& t) { return ops::matmul_nt(t[0], t[1]); }},
      {"transpose", {{3, 2}}, [](auto& t) { return ops::transpose(t[0]); }},
      {"reshape", {{3, 2}}, [](auto& t) { return ops::reshape(t[0], {2, 3}); }},
      {"add", {{2, 3}, {2, 3}}, [](auto& t) { return ops::add(t[0], t[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](auto& t) { return ops::sub(t[0], t[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](auto& t) { return ops::mul(t[0], t[1]); }},
      {"add_bias", {{3, 2}, {2}}, [](auto& t) { return ops::add_bias(t[0], t[1]); }},
      {"scale", {{2, 3}}, [](auto& t) { return ops::scale(t[0], -1.7); }},
      {"div_scalar", {{2, 3}, {1}}, [](auto& t) { return ops::div_scalar(t[0], t[1]); }, 0.5, 1.5},
      {"sum", {{2, 3}}, [](auto& t) { return ops::sum(t[0]); }},
      {"mean", {{2, 3}}, [](auto& t) { return ops::mean(t[0]); }},
      {"mean_of", {{1}, {1}, {1}}, [](auto& t) { return ops::mean_of(t); }},
      {"pick", {{2, 3}}, [](auto& t) { return ops::pick(t[0], 4); }},
      {"softmax0", {{3, 4}}, [](auto& t) { return ops::softmax(t[0], 0); }},
      {"softmax1", {{3, 4}}, [](auto& t) { return ops::softmax(t[0], 1); }},
      {"log_softmax", {{3, 4}}, [](auto& t) { return ops::log_softmax(t[0], 1); }},
      {"exp", {{2, 3}}, [](auto& t) { return ops::exp(t[0]); }},
      {"log", {{2, 3}}, [](auto& t) { return ops::log(t[0]); }, 0.2, 2.0},
      {"sigmoid", {{2, 3}}, [](auto& t) { return ops::sigmoid(t[0]); }, -4, 4},
      {"relu", {{2, 3}}, [](auto& t) { return ops::relu(t[0]); }},
      {"gelu", {{2, 3}}, [](auto& t) { return ops::gelu(t[0]); }, -3, 3},
      {"clamp", {{2, 3}}, [](auto& t) { return ops::clamp(t[0], -0.5, 0.5); }},
      {"layer_norm", {{3, 5}, {5}, {5}}, [](auto& t) { return ops::layer_norm(t[0], t[1], t[2]); }},
      {"l2_normalize_rows", {{3, 4}}, [](auto& t) { return ops::l2_normalize_rows(t[0]); }},
      {"slice_cols", {{3, 5}}, [](auto& t) { return ops::slice_cols(t[0], 1, 3); }},
      {"concat_cols", {{3, 2}, {3, 1}}, [](auto& t) { return ops::concat_cols(t); }},
      {"concat_rows", {{1, 3}, {2, 3}}, [](auto& t) { return ops::concat_rows(t); }},
      {"gather_rows", {{4, 3}}, [&](auto& t) { return ops::gather_rows(t[0], rows01); }},
      {"add_to_rows", {{4, 3}, {1, 3}}, [&](auto& t) { return ops::add_to_rows(t[0], t[1], {rows01, 2}); }},
      {"max_rows", {{4, 3}}, [](auto& t) { return ops::max_rows(t[0]).values; }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
      std::vector<Tensor> inputs;
      std::vector<NamedTensor> named;
      for (const auto& s : c.shapes) {
        inputs.push_back(random_tensor(rng, s, true, c.lo, c.hi));
        named.push_back({"in", inputs.back()});
      }
      const auto out_shape = c.f(inputs).shape();
      auto w = random_tensor(rng, out_shape, false);
      auto report = grad_check([&] { return weighted(c.f(inputs), w); }, named);
      worst = std::max(worst, report.max_rel_error());
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("a tensor used twice accumulates both path gradients") {
  std::mt19937_64 rng(9);
  auto x = random_tensor(rng, {2, 3});
  auto w1 = random_tensor(rng, {2, 3}, false);
  auto w2 = random_tensor(rng, {2, 3}, false);
  // Shared use.
  ops::add(ops::sum(ops::mul(ops::exp(x), w1)), ops::sum(ops::mul(x, w2)))
      .backward();
  auto shared = values(Tensor::from({6}, {x.grad().begin(), x.grad().end()}));
  // Symbolic duplication: two independent copies, gradients summed by hand.
  auto a = x.clone(), b = x.clone();
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  ops::add(ops::sum(ops::mul(ops::exp(a), w1)), ops::sum(ops::mul(b, w2)))
      .backward();
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(shared[i] == doctest::Approx(a.grad()[i] + b.grad()[i]).epsilon(1e-14));
  }
  // A second backward adds on top of the existing leaf gradient.
  ops::add(ops::sum(ops::mul(ops::exp(x), w1)), ops::sum(ops::mul(x, w2)))
      .backward();
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2 * shared[i]).epsilon(1e-14));
  }
}

TEST_CASE("backward over a 10^4-node DAG visits each node once") {
  // Every level reuses the previous node twice: y' = 0.5 y + 0.5 y. A walk
  // that revisited nodes per path would be exponential.
  auto x = Tensor::from({1}, {1.5}, true);
  Tensor y = x;
  std::size_t created = 0;
  while (created + 3 <= 10000) {
    y = ops::add(ops::scale(y, 0.5), ops::scale(y, 0.5));
    created += 3;
  }
  const auto ran = y.backward();
  CHECK(ran == created);
  CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(y.item() == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("non-finite results are rejected") {
  CHECK_THROWS_AS(ops::log(Tensor::from({1}, {-1.0})), NumericalError);
  CHECK_THROWS_AS(ops::exp(Tensor::from({1}, {1000.0})), NumericalError);
  CHECK_THROWS_AS(check_finite(std::vector<double>{1.0, NAN}, "probe"),
                  NumericalError);
}

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  auto t = Tensor::zeros({3, 2}, true);
  t.mutable_grad();
  CHECK(t.grad().size() == t.numel());
  CHECK(t.numel() == 6);
}

TEST_CASE("SGD examples") {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgd;
  cfg.lr = 0.1;
  Optimizer opt(cfg);
  auto p = Tensor::from({1}, {1.0}, true);
  p.mutable_grad()[0] = 2.0;
  std::vector<Tensor> params{p};
  opt.step(params);
  CHECK(p.at(0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(p.grad()[0] == 0.0);
  opt.step(params);  // zero grad leaves the parameter alone
  CHECK(p.at(0) == doctest::Approx(0.8).epsilon(1e-15));

  cfg.lr = 0.25;
  Optimizer opt2(cfg);
  auto x = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> xs{x};
  for (double expected : {0.5, 0.25}) {
    ops::mul(x, x).backward();
    opt2.step(xs);
    CHECK(x.at(0) == doctest::Approx(expected).epsilon(1e-15));
  }
  CHECK(opt2.steps() == 2);
}

TEST_CASE("optimizer rejects a parameter without gradient") {
  Optimizer opt({});
  std::vector<Tensor> params{Tensor::from({1}, {1.0}, true)};
  CHECK_THROWS_AS(opt.step(params), UsageError);
}

TEST_CASE("Adam first step moves each parameter by about lr against the gradient") {
  OptimizerConfig cfg;
  cfg.lr = 1e-3;
  Optimizer opt(cfg);
  auto p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  auto g = p.mutable_grad();
  g[0] = 4.0;
  g[1] = -0.01;
  g[2] = 0.0;
  std::vector<Tensor> params{p};
  opt.step(params);
  CHECK(p.at(0) == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(p.at(1) == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
  CHECK(p.at(2) == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("dropout is identity at rate zero and inverted otherwise") {
  std::mt19937_64 rng(1);
  auto x = Tensor::full({10, 10}, 1.0);
  CHECK(ops::dropout(x, 0.0, rng).node() == x.node());
  auto y = ops::dropout(x, 0.5, rng);
  for (double v : y.data()) CHECK((v == 0.0 || v == 2.0));
}
