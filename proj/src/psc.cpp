#include "svip/psc.hpp"

#include <algorithm>
#include <numeric>

#include "svip/errors.hpp"
#include "svip/ops.hpp"

namespace svip {

void W2PParams::collect(std::vector<NamedTensor>& out) const {
  proj.collect("w2p.proj", out);
}

bool SelectionMask::contains(std::size_t patch) const {
  return std::binary_search(indices.begin(), indices.end(), patch);
}

std::vector<std::size_t> SelectionMask::complement() const {
  std::vector<std::size_t> out;
  out.reserve(num_patches - indices.size());
  for (std::size_t i = 0; i < num_patches; ++i)
    if (!contains(i)) out.push_back(i);
  return out;
}

Tensor build_context_patch(const Tensor& word_embeddings,
                           const W2PParams& w2p) {
  if (word_embeddings.rank() != 2 || word_embeddings.rows() == 0) {
    throw ConfigError("context patch needs at least one attribute word vector");
  }
  Tensor projected = w2p.proj(word_embeddings);  // [K, C]
  const std::size_t k = projected.rows();
  Tensor pool = Tensor::full({1, k}, 1.0 / static_cast<double>(k));
  return ops::matmul(pool, projected);
}

SelectionMask select_top_m(std::span<const double> scores, std::size_t m) {
  if (m > scores.size()) {
    throw UsageError("select_top_m: M = " + std::to_string(m) +
                     " exceeds patch count " + std::to_string(scores.size()));
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  SelectionMask mask;
  mask.num_patches = scores.size();
  mask.indices.assign(order.begin(), order.begin() + static_cast<long>(m));
  std::sort(mask.indices.begin(), mask.indices.end());
  return mask;
}

Tensor contextualize(const Tensor& patch_embeddings, const SelectionMask& mask,
                     const Tensor& context) {
  if (patch_embeddings.rows() != mask.num_patches) {
    throw ShapeError("contextualize: mask covers " +
                     std::to_string(mask.num_patches) + " patches, got " +
                     std::to_string(patch_embeddings.rows()));
  }
  const auto rest = mask.complement();
  if (rest.empty()) return patch_embeddings;
  return ops::add_to_rows(patch_embeddings, context, rest);
}

}  // namespace svip
