#pragma once

#include <span>
#include <vector>

#include "svip/nn.hpp"
#include "svip/tensor.hpp"

// Patch semantic contextualization: a context embedding built from attribute
// word vectors is added to the patches that were not selected as
// semantically related.
namespace svip {

// Word-to-patch projection: a shared linear map per word, mean-pooled.
struct W2PParams {
  Linear proj;  // word_dim -> C
  void collect(std::vector<NamedTensor>& out) const;
};

struct ContextPatch {
  W2PParams w2p;
  Tensor words;  // [K, word_dim], frozen after load
};

// 0-based patch indices in ascending order; |indices| == M.
struct SelectionMask {
  std::vector<std::size_t> indices;
  std::size_t num_patches = 0;

  std::size_t m() const { return indices.size(); }
  bool contains(std::size_t patch) const;
  // Patches not in the mask, ascending.
  std::vector<std::size_t> complement() const;
};

// e = mean_k (w_k W + b), shape [1, C]. Throws ConfigError when K == 0.
Tensor build_context_patch(const Tensor& word_embeddings, const W2PParams& w2p);

// Indices of the M largest scores; equal scores prefer the lower index.
// Throws UsageError when M > N.
SelectionMask select_top_m(std::span<const double> scores, std::size_t m);

// v_i for selected patches, v_i + e for the rest. Input and output are the
// [N, C] patch embeddings; the class token and positional table are added
// afterwards by embed_sequence.
Tensor contextualize(const Tensor& patch_embeddings, const SelectionMask& mask,
                     const Tensor& context);

}  // namespace svip
