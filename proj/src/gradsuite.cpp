#include "svip/gradsuite.hpp"

#include <algorithm>
#include <random>

#include "svip/model.hpp"
#include "svip/trainer.hpp"

namespace svip {

ViTConfig minimal_vit() {
  ViTConfig v;
  v.image_size = 4;
  v.patch_size = 2;
  v.channels = 1;
  v.embed_dim = 8;
  v.num_layers = 2;
  v.num_heads = 2;
  v.mlp_ratio = 2.0;
  v.num_attributes = 4;
  v.num_seen_classes = 2;
  v.init_std = 0.5;
  return v;
}

TrainConfig minimal_train() {
  TrainConfig t;
  t.batch_size = 2;
  t.word_dim = 6;
  return t;
}

double GradSuiteResult::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

bool GradSuiteResult::passed(double tolerance) const {
  return !entries.empty() && max_rel_error() < tolerance;
}

GradSuiteResult run_gradient_suite(const ViTConfig& vit, const TrainConfig& cfg,
                                   std::size_t num_unseen, std::uint64_t seed) {
  vit.validate();
  cfg.validate(vit.num_patches());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  const std::size_t k = vit.num_attributes;
  const std::size_t seen = vit.num_seen_classes;
  std::vector<int> ids;
  std::vector<Split> splits;
  Matrix attrs(seen + num_unseen, k);
  for (std::size_t r = 0; r < attrs.rows; ++r) {
    ids.push_back(static_cast<int>(r));
    splits.push_back(r < seen ? Split::kSeen : Split::kUnseen);
    for (std::size_t j = 0; j < k; ++j) attrs(r, j) = 0.1 + u01(rng);
  }
  AttributeMatrix classes(ids, splits, attrs);

  std::vector<double> words(k * cfg.word_dim);
  for (auto& w : words) w = u01(rng) - 0.5;
  const Tensor word_tensor = Tensor::from({k, cfg.word_dim}, words);

  Batch batch;
  for (std::size_t i = 0; i < std::max<std::size_t>(2, cfg.batch_size); ++i) {
    std::vector<double> px(vit.image_size * vit.image_size * vit.channels);
    for (auto& p : px) p = u01(rng);
    batch.patches.push_back(patchify(
        Tensor::from({vit.image_size, vit.image_size, vit.channels}, px),
        vit.patch_size));
    batch.labels.push_back(static_cast<int>(i % seen));
  }

  struct Variant {
    const char* name;
    Switches sw;
    std::vector<std::string> groups;
  };
  Switches no_w2p, no_p2a;
  no_w2p.w2p = false;
  no_p2a.p2a = false;
  const std::vector<Variant> variants = {
      {"full", Switches{},
       {"backbone", "patch_classifier", "w2p", "p2a", "cls_token",
        "positional"}},
      {"free-context", no_w2p, {"context"}},
      {"class-token-head", no_p2a, {"cls_head"}},
  };

  GradSuiteResult result;
  for (const auto& variant : variants) {
    auto model = SvipModel::create(vit, word_tensor, seed);
    TrainConfig c = cfg;
    c.switches = variant.sw;
    std::vector<NamedTensor> params;
    for (auto& p : model.active_parameters(c.switches)) {
      const auto g = parameter_group(p.name);
      if (std::find(variant.groups.begin(), variant.groups.end(), g) !=
          variant.groups.end()) {
        params.push_back(p);
      }
    }
    PinnedTargets pinned;
    batch_objective(model, batch, classes, c, &pinned);
    auto report = grad_check(
        [&] { return batch_objective(model, batch, classes, c, &pinned); },
        params);
    for (auto& e : report.entries) {
      const auto group = parameter_group(e.name);
      auto& gm = result.group_max[group];
      gm = std::max(gm, e.max_rel_error);
      e.name = std::string(variant.name) + "/" + e.name;
      result.entries.push_back(e);
    }
  }
  return result;
}

}  // namespace svip
