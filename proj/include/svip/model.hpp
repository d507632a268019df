#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svip/backbone.hpp"
#include "svip/config.hpp"
#include "svip/psc.hpp"
#include "svip/ssps.hpp"
#include "svip/zslhead.hpp"

namespace svip {

// Every trainable tensor of the architecture plus the frozen word vectors.
// Unused branches (e.g. the class-token head when P2A is on) are still
// allocated so that one checkpoint layout serves every ablation setting.
struct SvipModel {
  ViTConfig vit;
  BackboneParams backbone;
  PatchClassifierParams patch_classifier;
  ContextPatch context;
  Tensor free_context;  // [1, C]; used instead of W2P when w2p is off
  Linear p2a;           // C -> K
  Linear cls_head;      // C -> K; used when p2a is off

  // Initializes every parameter from `seed`. `words` is [K, word_dim].
  static SvipModel create(const ViTConfig& vit, const Tensor& words,
                          std::uint64_t seed);

  // All trainable tensors with stable dotted names.
  std::vector<NamedTensor> named_parameters() const;
  // Parameters the given switches actually route gradients through.
  std::vector<NamedTensor> active_parameters(const Switches& sw) const;
  // Trainable and frozen tensors, in checkpoint order.
  std::vector<NamedTensor> state() const;

  // Context embedding e for the current parameters, [1, C].
  Tensor context_embedding(const Switches& sw) const;
};

// Parameter group of a dotted name: backbone, patch_classifier, w2p, p2a,
// cls_token, positional, context, cls_head.
std::string parameter_group(const std::string& name);

}  // namespace svip
