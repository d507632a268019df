#pragma once

#include <span>
#include <vector>

#include "svip/backbone.hpp"
#include "svip/matrix.hpp"
#include "svip/nn.hpp"

// Self-supervised patch selection: attention aggregated across layers gives
// each patch a pseudo semantic score, and a small classifier learns to predict
// that score from the patch embedding alone.
namespace svip {

struct SemanticScores {
  std::vector<double> raw;        // class-token row of the aggregate, patches only
  std::vector<double> pseudo;     // targets in [0, 1]
  std::vector<double> predicted;  // classifier output in (0, 1)
};

struct PatchClassifierParams {
  Linear hidden;  // C -> C
  Linear output;  // C -> 1

  static PatchClassifierParams create(Initializer& init, std::size_t width);
  void collect(std::vector<NamedTensor>& out) const;
};

// W^1 = T^1, W^l = W^{l-1} + W^{l-1} T^l, using the head-averaged T^l.
// Throws UsageError on an empty trace.
Matrix aggregate_attention(const AttentionTrace& trace);

// Unnormalized scores r_i = W[0, i] for i = 1..N.
std::vector<double> raw_scores(const Matrix& aggregated);

// Per-image min-max normalization of raw scores; a constant vector maps to
// 0.5 everywhere.
std::vector<double> pseudo_scores(const Matrix& aggregated);

// Top-M -> 1, rest -> 0 (same tie rule as patch selection).
std::vector<double> binarize_top_m(std::span<const double> scores,
                                   std::size_t m);

// Sigmoid scores for each row of the [N, C] patch embeddings, as [N, 1].
Tensor classify_patches(const Tensor& patch_embeddings,
                        const PatchClassifierParams& params);

// Mean binary cross-entropy against detached targets. Predictions are clamped
// to [1e-7, 1 - 1e-7] before the logs.
Tensor patch_loss(const Tensor& predicted, std::span<const double> targets);

}  // namespace svip
