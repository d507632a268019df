#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "support.hpp"
#include "svip/errors.hpp"
#include "svip/ops.hpp"
#include "svip/zslhead.hpp"

using namespace svip;
using svip::testing::max_abs_diff;
using svip::testing::random_tensor;

namespace {

AttributeMatrix make_classes(std::vector<std::vector<double>> rows,
                             std::size_t num_seen) {
  const std::size_t k = rows[0].size();
  Matrix m(rows.size(), k);
  std::vector<int> ids;
  std::vector<Split> splits;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), m.values.begin() + r * k);
    ids.push_back(static_cast<int>(10 + r));
    splits.push_back(r < num_seen ? Split::kSeen : Split::kUnseen);
  }
  return AttributeMatrix(ids, splits, m);
}

AttributeMatrix random_classes(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(svip::testing::uniform(rng, k, 0.05, 1.0));
  return make_classes(rows, n / 2);
}

Tensor row(std::vector<double> v) {
  const std::size_t k = v.size();
  return Tensor::from({1, k}, std::move(v));
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_CASE("attribute matrix validation") {
  auto good = make_classes({{1, 0}, {0, 1}}, 1);
  CHECK(good.num_classes() == 2);
  CHECK(good.num_attributes() == 2);
  CHECK(good.row_of(11) == 1);
  CHECK(good.rows_with(Split::kUnseen) == std::vector<std::size_t>{1});
  CHECK_THROWS_AS(good.row_of(99), DataError);
  CHECK_THROWS_AS(make_classes({{1, 0}, {0, 0}}, 1), DataError);
  Matrix m(2, 2, 1.0);
  CHECK_THROWS_AS(AttributeMatrix({1, 1}, {Split::kSeen, Split::kUnseen}, m),
                  DataError);
}

TEST_CASE("patch-to-attribute projection") {
  Initializer init(1, 0.3);
  auto p2a = Linear::create(init, 64, 16);
  std::mt19937_64 rng(1);
  auto z = random_tensor(rng, {40, 64}, false);
  CHECK(project_attributes(z, p2a).shape() == Shape{40, 16});

  auto w = p2a.weight.mutable_data();
  std::fill(w.begin(), w.end(), 0.0);
  auto b = p2a.bias.mutable_data();
  auto bv = svip::testing::uniform(rng, 16);
  std::copy(bv.begin(), bv.end(), b.begin());
  auto a = project_attributes(z, p2a);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t k = 0; k < 16; ++k) CHECK(a.at(r, k) == bv[k]);

  auto one = project_attributes(ops::gather_rows(z, std::vector<std::size_t>{3}), p2a);
  auto pooled = pool_attributes(one);
  CHECK(max_abs_diff(pooled.pooled.data(), one.data()) == 0.0);

  CHECK_THROWS_AS(project_attributes(Tensor::zeros({0, 64}), p2a), ConfigError);
}

TEST_CASE("max pooling examples") {
  auto p = pool_attributes(Tensor::from({2, 2}, {1, 0, 0, 2}));
  CHECK(std::vector<double>(p.pooled.data().begin(), p.pooled.data().end()) ==
        std::vector<double>{1, 2});
  CHECK(p.argmax == std::vector<std::size_t>{0, 1});

  auto tie = pool_attributes(Tensor::from({3, 1}, {4, 4, 4}));
  CHECK(tie.argmax == std::vector<std::size_t>{0});

  auto neg = pool_attributes(Tensor::from({2, 1}, {-1, -3}));
  CHECK(neg.pooled.item() == -1.0);
}

TEST_CASE("pooling is permutation invariant and consistent with argmax") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = random_tensor(rng, {7, 5}, false);
    std::vector<std::size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto p = pool_attributes(a);
    auto q = pool_attributes(ops::gather_rows(a, perm));
    CHECK(max_abs_diff(p.pooled.data(), q.pooled.data()) == 0.0);
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(a.at(p.argmax[k], k) == p.pooled.at(0, k));
      CHECK(perm[q.argmax[k]] == p.argmax[k]);
    }
  }
}

TEST_CASE("cosine classification examples") {
  auto classes = make_classes({{1, 0}, {0, 1}}, 2);
  const std::vector<std::size_t> both{0, 1};
  auto p = classify(row({1, 0}), classes, both, 5.0);
  const double e5 = std::exp(5.0);
  CHECK(p.at(0, 0) == doctest::Approx(e5 / (e5 + 1)).epsilon(1e-12));
  CHECK(p.at(0, 1) == doctest::Approx(1 / (e5 + 1)).epsilon(1e-12));
  CHECK(p.at(0, 0) == doctest::Approx(0.9933).epsilon(1e-4));

  auto eq = classify(row({1, 1}), classes, both, 5.0);
  CHECK(eq.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  auto scaled = classify(row({10, 0}), classes, both, 5.0);
  CHECK(max_abs_diff(scaled.data(), p.data()) < 1e-12);

  const std::vector<std::size_t> single{1};
  CHECK(classify(row({1, 0}), classes, single, 5.0).item() == 1.0);

  auto zero = classify(row({0, 0}), classes, both, 5.0);
  for (double v : zero.data()) CHECK(std::isfinite(v));
}

TEST_CASE("classification invariants") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto classes = random_classes(rng, 6, 8);
    auto rows = classes.all_rows();
    auto a = svip::testing::uniform(rng, 8);
    auto p = classify(row(a), classes, rows, 5.0);
    const auto pd = p.data();
    CHECK(std::abs(std::accumulate(pd.begin(), pd.end(), 0.0) - 1.0) < 1e-9);
    for (double v : pd) CHECK(v > 0.0);

    const double sigma = svip::testing::uniform(rng, 1, 0.1, 20.0)[0];
    CHECK(argmax(classify(row(a), classes, rows, sigma).data()) == argmax(pd));

    auto a2 = a;
    for (auto& x : a2) x *= 7.5;
    CHECK(max_abs_diff(classify(row(a2), classes, rows, 5.0).data(), pd) < 1e-12);

    Matrix m = classes.values();
    for (std::size_t k = 0; k < 8; ++k) m(2, k) *= 3.0;
    AttributeMatrix rescaled(classes.class_ids(), classes.splits(), m);
    CHECK(max_abs_diff(classify(row(a), rescaled, rows, 5.0).data(), pd) < 1e-12);
  }
}

TEST_CASE("an exact attribute match wins among candidates") {
  // Unseen classes recombine seen glyph attributes.
  auto classes = make_classes({{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}}, 2);
  const auto unseen = classes.rows_with(Split::kUnseen);
  const auto all = classes.all_rows();
  for (std::size_t r : unseen) {
    auto a = classes.row(r);
    auto pooled = row({a.begin(), a.end()});
    CHECK(unseen[argmax(classify(pooled, classes, unseen, 5.0).data())] == r);
    CHECK(all[argmax(classify(pooled, classes, all, 5.0).data())] == r);
  }
}

TEST_CASE("head gradients match finite differences") {
  std::mt19937_64 rng(4);
  Initializer init(4, 0.5);
  auto p2a = Linear::create(init, 6, 4);
  auto z = random_tensor(rng, {5, 6});
  auto classes = random_classes(rng, 4, 4);
  const auto rows = classes.all_rows();
  std::vector<NamedTensor> named;
  p2a.collect("p2a", named);
  named.push_back({"z", z});
  auto report = grad_check(
      [&] {
        auto pooled = pool_attributes(project_attributes(z, p2a)).pooled;
        return ops::scale(ops::pick(ops::log_softmax(
                              cosine_logits(pooled, classes, rows, 5.0), 1), 2),
                          -1.0);
      },
      named);
  for (const auto& e : report.entries) {
    CAPTURE(e.name);
    CHECK(e.max_rel_error < 1e-4);
  }
}
