#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "svip/config.hpp"
#include "svip/matrix.hpp"
#include "svip/nn.hpp"
#include "svip/tensor.hpp"

namespace svip {

struct TransformerBlockParams {
  LayerNormParams norm1;
  Tensor qkv;     // [C, 3C], columns laid out [q | k | v], heads contiguous
  Tensor q_bias;  // [C]; keys carry no bias, softmax rows cancel it
  Tensor v_bias;  // [C]
  Linear proj;  // C -> C
  LayerNormParams norm2;
  Linear fc1;   // C -> hidden
  Linear fc2;   // hidden -> C
};

struct BackboneParams {
  Linear patch_embed;  // patch_dim -> C, shared across patches
  Tensor cls_token;    // [1, C]
  Tensor positional;   // [N+1, C]
  std::vector<TransformerBlockParams> blocks;
  LayerNormParams final_norm;

  static BackboneParams create(const ViTConfig& cfg, Initializer& init);
  // Positional and class-token tensors are reported separately from the rest
  // of the backbone so gradient checks can name each group.
  void collect(std::vector<NamedTensor>& out) const;
};

// Class token at row 0 followed by patch embeddings, plus the positional rows
// that go with them. Normally N+1 rows; the drop-patches ablation builds a
// shorter sequence with the matching positional rows.
struct PatchSequence {
  Tensor embeddings;  // [n+1, C], before positional addition
  Tensor positional;  // [n+1, C]

  std::size_t length() const { return embeddings.rows(); }
  Tensor tokens() const;  // embeddings + positional
};

struct AttentionLayer {
  std::vector<Matrix> heads;  // each (n+1) x (n+1), rows sum to 1
  Matrix mean;                // head-sum / H
};

// Per-layer attention copied out of the graph during a forward pass.
struct AttentionTrace {
  std::vector<AttentionLayer> layers;
  std::size_t num_layers() const { return layers.size(); }
};

struct BackboneOutput {
  Tensor final_embeddings;  // Z^L, [n+1, C]
  AttentionTrace trace;
};

struct ForwardOptions {
  bool record_trace = true;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when dropout > 0
};

// Image tensor [H, W, Ch] -> [N, P*P*Ch]; patches row-major over the grid,
// pixels row-major within a patch with channels innermost.
Tensor patchify(const Tensor& image, std::size_t patch_size);

// Patch embeddings v_1..v_N, [N, C]. Differentiable in patch_embed.
Tensor embed_patches(const Tensor& patches, const BackboneParams& params);

// Prepends the class token and pairs with the full positional table.
PatchSequence embed_sequence(const Tensor& patch_embeddings,
                             const BackboneParams& params);

// Same, but only the listed patches (0-based) are kept, each with its own
// positional row.
PatchSequence embed_subsequence(const Tensor& patch_embeddings,
                                std::span<const std::size_t> keep,
                                const BackboneParams& params);

// Pre-norm transformer stack with a final layer norm.
BackboneOutput forward(const PatchSequence& seq, const BackboneParams& params,
                       const ViTConfig& cfg, const ForwardOptions& opts = {});

}  // namespace svip
