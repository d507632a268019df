#include "svip/model.hpp"

#include "svip/errors.hpp"

namespace svip {

SvipModel SvipModel::create(const ViTConfig& vit, const Tensor& words,
                            std::uint64_t seed) {
  vit.validate();
  if (words.rank() != 2 || words.rows() == 0) {
    throw ConfigError("word embeddings must be a non-empty [K, d] matrix");
  }
  if (words.rows() != vit.num_attributes) {
    throw ConfigError("word embeddings have " + std::to_string(words.rows()) +
                      " rows but the model has " +
                      std::to_string(vit.num_attributes) + " attributes");
  }
  Initializer init(seed, vit.init_std);
  SvipModel m;
  m.vit = vit;
  m.backbone = BackboneParams::create(vit, init);
  m.patch_classifier = PatchClassifierParams::create(init, vit.embed_dim);
  m.context.w2p.proj = Linear::create(init, words.cols(), vit.embed_dim);
  m.context.words = words.detach();
  m.free_context = init.truncated_normal({1, vit.embed_dim});
  m.p2a = Linear::create(init, vit.embed_dim, vit.num_attributes);
  m.cls_head = Linear::create(init, vit.embed_dim, vit.num_attributes);
  return m;
}

std::vector<NamedTensor> SvipModel::named_parameters() const {
  std::vector<NamedTensor> out;
  backbone.collect(out);
  patch_classifier.collect(out);
  context.w2p.collect(out);
  out.push_back({"context.free", free_context});
  p2a.collect("p2a", out);
  cls_head.collect("cls_head", out);
  return out;
}

std::vector<NamedTensor> SvipModel::active_parameters(const Switches& sw) const {
  std::vector<NamedTensor> out;
  for (auto& p : named_parameters()) {
    const auto group = parameter_group(p.name);
    if (group == "patch_classifier" && !sw.ssps) continue;
    if (group == "w2p" && !(sw.psc && sw.w2p)) continue;
    if (group == "context" && !(sw.psc && !sw.w2p)) continue;
    if (group == "p2a" && !sw.p2a) continue;
    if (group == "cls_head" && sw.p2a) continue;
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<NamedTensor> SvipModel::state() const {
  auto out = named_parameters();
  out.push_back({"w2p.words", context.words});
  return out;
}

Tensor SvipModel::context_embedding(const Switches& sw) const {
  if (!sw.w2p) return free_context;
  return build_context_patch(context.words, context.w2p);
}

std::string parameter_group(const std::string& name) {
  auto dot = name.find('.');
  auto head = name.substr(0, dot);
  return head;
}

}  // namespace svip
