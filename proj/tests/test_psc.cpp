#include <doctest.h>

#include <algorithm>

#include "support.hpp"
#include "svip/errors.hpp"
#include "svip/ops.hpp"
#include "svip/psc.hpp"

using namespace svip;
using svip::testing::max_abs_diff;
using svip::testing::random_tensor;

namespace {

W2PParams make_w2p(std::uint64_t seed, std::size_t word_dim, std::size_t c) {
  Initializer init(seed, 0.3);
  W2PParams w;
  w.proj = Linear::create(init, word_dim, c);
  auto b = w.proj.bias.mutable_data();
  std::mt19937_64 rng(seed);
  auto v = svip::testing::uniform(rng, b.size());
  std::copy(v.begin(), v.end(), b.begin());
  return w;
}

std::vector<std::size_t> ids(std::initializer_list<std::size_t> l) { return l; }

}  // namespace

TEST_CASE("context patch examples") {
  std::mt19937_64 rng(1);
  auto w2p = make_w2p(1, 6, 4);
  auto words = random_tensor(rng, {5, 6}, false);

  SUBCASE("zero projection gives the bias") {
    auto d = w2p.proj.weight.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
    auto e = build_context_patch(words, w2p);
    CHECK(e.shape() == Shape{1, 4});
    CHECK(max_abs_diff(e.data(), w2p.proj.bias.data()) < 1e-15);
  }
  SUBCASE("a single word is its own projection") {
    auto one = ops::gather_rows(words, ids({2}));
    auto e = build_context_patch(one, w2p);
    CHECK(max_abs_diff(e.data(), w2p.proj(one).data()) < 1e-15);
  }
  SUBCASE("duplicating every word leaves e unchanged") {
    auto twice = ops::gather_rows(words, ids({0, 1, 2, 3, 4, 0, 1, 2, 3, 4}));
    CHECK(max_abs_diff(build_context_patch(twice, w2p).data(),
                       build_context_patch(words, w2p).data()) < 1e-14);
  }
  SUBCASE("word order does not matter") {
    auto shuffled = ops::gather_rows(words, ids({3, 0, 4, 2, 1}));
    CHECK(max_abs_diff(build_context_patch(shuffled, w2p).data(),
                       build_context_patch(words, w2p).data()) < 1e-14);
  }
  SUBCASE("no words is a configuration error") {
    CHECK_THROWS_AS(build_context_patch(Tensor::zeros({0, 6}), w2p), ConfigError);
  }
}

TEST_CASE("top-M selection") {
  const std::vector<double> s{0.9, 0.1, 0.5};
  CHECK(select_top_m(s, 2).indices == ids({0, 2}));
  CHECK(select_top_m(s, 3).indices == ids({0, 1, 2}));
  CHECK(select_top_m(s, 0).indices.empty());
  CHECK(select_top_m(std::vector<double>{0.3, 0.3, 0.3, 0.3}, 2).indices ==
        ids({0, 1}));
  CHECK_THROWS_AS(select_top_m(s, 4), UsageError);

  auto mask = select_top_m(s, 2);
  CHECK(mask.m() == 2);
  CHECK(mask.num_patches == 3);
  CHECK(mask.contains(0));
  CHECK_FALSE(mask.contains(1));
  CHECK(mask.complement() == ids({1}));
}

TEST_CASE("top-M selection is invariant under increasing transforms") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    auto s = svip::testing::uniform(rng, 16, 0.0, 1.0);
    s[3] = s[7];  // exercise ties
    std::vector<double> t(s.size());
    std::transform(s.begin(), s.end(), t.begin(),
                   [](double x) { return std::exp(3.0 * x) - 2.0; });
    const std::size_t m = rng() % 17;
    auto a = select_top_m(s, m);
    CHECK(a.indices == select_top_m(t, m).indices);
    CHECK(a.m() == m);
    CHECK(std::is_sorted(a.indices.begin(), a.indices.end()));
    CHECK(std::adjacent_find(a.indices.begin(), a.indices.end()) ==
          a.indices.end());
    // Every selected score is at least every unselected score.
    for (auto i : a.indices)
      for (auto j : a.complement()) CHECK(s[i] >= s[j]);
  }
}

TEST_CASE("contextualize shifts exactly the unselected patches by e") {
  std::mt19937_64 rng(3);
  auto v = random_tensor(rng, {6, 4}, false);
  auto e = random_tensor(rng, {1, 4}, false);

  SUBCASE("M = N is the identity") {
    auto out = contextualize(v, select_top_m(std::vector<double>(6, 1.0), 6), e);
    CHECK(max_abs_diff(out.data(), v.data()) == 0.0);
  }
  SUBCASE("M = 0 shifts every patch") {
    auto out = contextualize(v, select_top_m(std::vector<double>(6, 1.0), 0), e);
    for (std::size_t r = 0; r < 6; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        CHECK(out.at(r, c) == v.at(r, c) + e.at(0, c));
  }
  SUBCASE("e = 0 changes nothing") {
    auto out = contextualize(v, select_top_m(svip::testing::uniform(rng, 6), 3),
                             Tensor::zeros({1, 4}));
    CHECK(max_abs_diff(out.data(), v.data()) == 0.0);
  }
  SUBCASE("random masks") {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t m = rng() % 7;
      auto mask = select_top_m(svip::testing::uniform(rng, 6), m);
      auto out = contextualize(v, mask, e);
      std::size_t changed = 0;
      for (std::size_t r = 0; r < 6; ++r) {
        bool differs = false;
        for (std::size_t c = 0; c < 4; ++c) {
          if (mask.contains(r)) {
            CHECK(out.at(r, c) == v.at(r, c));
          } else {
            CHECK(out.at(r, c) == v.at(r, c) + e.at(0, c));
          }
          differs |= out.at(r, c) != v.at(r, c);
        }
        changed += differs;
      }
      CHECK(changed == 6 - m);
    }
  }
  SUBCASE("mask size must match") {
    CHECK_THROWS_AS(
        contextualize(v, select_top_m(std::vector<double>(5, 1.0), 2), e),
        ShapeError);
  }
}

TEST_CASE("the class token is not contextualized") {
  svip::testing::TinySetup t(4, 1);
  const auto& bb = t.model.backbone;
  auto v = embed_patches(t.patches[0], bb);
  auto mask = select_top_m(std::vector<double>(v.rows(), 1.0), 0);
  auto e = t.model.context_embedding(t.cfg.switches);
  auto seq = embed_sequence(contextualize(v, mask, e), bb);
  auto plain = embed_sequence(v, bb);
  for (std::size_t c = 0; c < t.vit.embed_dim; ++c)
    CHECK(seq.embeddings.at(0, c) == plain.embeddings.at(0, c));
}

TEST_CASE("W2P receives gradient only when some patches are unselected") {
  for (std::size_t m : {std::size_t{2}, std::size_t{4}}) {
    svip::testing::TinySetup t(5);
    t.cfg.keep_patches = m;
    auto loss = batch_objective(t.model, t.batch(), t.classes, t.cfg);
    for (auto& p : t.model.named_parameters()) p.tensor.zero_grad();
    loss.backward();
    double g = 0.0;
    for (const auto& p : t.model.named_parameters())
      if (parameter_group(p.name) == "w2p")
        g = std::max(g, svip::testing::max_abs_grad(p.tensor));
    CAPTURE(m);
    if (m < t.vit.num_patches()) {
      CHECK(g > 0.0);
    } else {
      CHECK(g == 0.0);
    }
  }
}
