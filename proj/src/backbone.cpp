#include "svip/backbone.hpp"

#include <cmath>
#include <string>

#include "svip/errors.hpp"
#include "svip/ops.hpp"

namespace svip {

BackboneParams BackboneParams::create(const ViTConfig& cfg,
                                      Initializer& init) {
  cfg.validate();
  const std::size_t c = cfg.embed_dim;
  BackboneParams p;
  p.patch_embed = Linear::create(init, cfg.patch_dim(), c);
  p.cls_token = init.truncated_normal({1, c});
  p.positional = init.truncated_normal({cfg.num_patches() + 1, c});
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    TransformerBlockParams b;
    b.norm1 = LayerNormParams::create(init, c);
    b.qkv = init.truncated_normal({c, 3 * c});
    b.q_bias = init.zeros({c});
    b.v_bias = init.zeros({c});
    b.proj = Linear::create(init, c, c);
    b.norm2 = LayerNormParams::create(init, c);
    b.fc1 = Linear::create(init, c, cfg.mlp_hidden());
    b.fc2 = Linear::create(init, cfg.mlp_hidden(), c);
    p.blocks.push_back(std::move(b));
  }
  p.final_norm = LayerNormParams::create(init, c);
  return p;
}

void BackboneParams::collect(std::vector<NamedTensor>& out) const {
  patch_embed.collect("backbone.patch_embed", out);
  out.push_back({"cls_token", cls_token});
  out.push_back({"positional", positional});
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const auto pre = "backbone.blocks." + std::to_string(l);
    const auto& b = blocks[l];
    b.norm1.collect(pre + ".norm1", out);
    out.push_back({pre + ".qkv.weight", b.qkv});
    out.push_back({pre + ".qkv.q_bias", b.q_bias});
    out.push_back({pre + ".qkv.v_bias", b.v_bias});
    b.proj.collect(pre + ".proj", out);
    b.norm2.collect(pre + ".norm2", out);
    b.fc1.collect(pre + ".fc1", out);
    b.fc2.collect(pre + ".fc2", out);
  }
  final_norm.collect("backbone.final_norm", out);
}

Tensor PatchSequence::tokens() const {
  return ops::add(embeddings, positional);
}

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3) {
    throw ShapeError("patchify: expected [H, W, Ch] image, got " +
                     shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), ch = image.dim(2);
  if (patch_size == 0 || h % patch_size != 0 || w % patch_size != 0) {
    throw ConfigError("patch size " + std::to_string(patch_size) +
                      " does not divide image " + std::to_string(h) + "x" +
                      std::to_string(w));
  }
  const std::size_t gh = h / patch_size, gw = w / patch_size;
  const std::size_t dim = patch_size * patch_size * ch;
  std::vector<double> out(gh * gw * dim);
  auto px = image.data();
  for (std::size_t gy = 0; gy < gh; ++gy) {
    for (std::size_t gx = 0; gx < gw; ++gx) {
      double* dst = out.data() + (gy * gw + gx) * dim;
      for (std::size_t y = 0; y < patch_size; ++y) {
        const std::size_t row = gy * patch_size + y;
        const double* src = px.data() + (row * w + gx * patch_size) * ch;
        std::copy_n(src, patch_size * ch, dst + y * patch_size * ch);
      }
    }
  }
  return Tensor::from({gh * gw, dim}, std::move(out));
}

Tensor embed_patches(const Tensor& patches, const BackboneParams& params) {
  return params.patch_embed(patches);
}

PatchSequence embed_sequence(const Tensor& patch_embeddings,
                             const BackboneParams& params) {
  if (patch_embeddings.rows() + 1 != params.positional.rows()) {
    throw ShapeError("embed_sequence: " +
                     std::to_string(patch_embeddings.rows()) +
                     " patches but positional table has " +
                     std::to_string(params.positional.rows()) + " rows");
  }
  const Tensor parts[] = {params.cls_token, patch_embeddings};
  return {ops::concat_rows(parts), params.positional};
}

PatchSequence embed_subsequence(const Tensor& patch_embeddings,
                                std::span<const std::size_t> keep,
                                const BackboneParams& params) {
  std::vector<std::size_t> pos_rows;
  pos_rows.reserve(keep.size() + 1);
  pos_rows.push_back(0);
  for (auto i : keep) pos_rows.push_back(i + 1);
  const Tensor parts[] = {params.cls_token,
                          ops::gather_rows(patch_embeddings, keep)};
  return {ops::concat_rows(parts), ops::gather_rows(params.positional, pos_rows)};
}

namespace {

Matrix to_matrix(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  std::copy(t.data().begin(), t.data().end(), m.values.begin());
  return m;
}

}  // namespace

BackboneOutput forward(const PatchSequence& seq, const BackboneParams& params,
                       const ViTConfig& cfg, const ForwardOptions& opts) {
  if (opts.dropout > 0.0 && opts.rng == nullptr) {
    throw UsageError("forward: dropout requires an RNG");
  }
  const std::size_t c = cfg.embed_dim;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  auto drop = [&](const Tensor& t) {
    return opts.dropout > 0.0 ? ops::dropout(t, opts.dropout, *opts.rng) : t;
  };

  BackboneOutput out;
  Tensor x = seq.tokens();
  for (const auto& block : params.blocks) {
    Tensor h = block.norm1(x);
    Tensor qkv = ops::matmul(h, block.qkv);
    Tensor q_all = ops::add_bias(ops::slice_cols(qkv, 0, c), block.q_bias);
    Tensor k_all = ops::slice_cols(qkv, c, c);
    Tensor v_all = ops::add_bias(ops::slice_cols(qkv, 2 * c, c), block.v_bias);
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    AttentionLayer layer;
    for (std::size_t hh = 0; hh < heads; ++hh) {
      Tensor q = ops::slice_cols(q_all, hh * hd, hd);
      Tensor k = ops::slice_cols(k_all, hh * hd, hd);
      Tensor v = ops::slice_cols(v_all, hh * hd, hd);
      Tensor att = ops::softmax(ops::scale(ops::matmul_nt(q, k), inv_sqrt), 1);
      if (opts.record_trace) layer.heads.push_back(to_matrix(att));
      head_out.push_back(ops::matmul(drop(att), v));
    }
    if (opts.record_trace) {
      Matrix mean(x.rows(), x.rows());
      for (const auto& m : layer.heads)
        for (std::size_t i = 0; i < mean.values.size(); ++i)
          mean.values[i] += m.values[i];
      for (auto& v : mean.values) v /= static_cast<double>(heads);
      layer.mean = std::move(mean);
      out.trace.layers.push_back(std::move(layer));
    }
    x = ops::add(x, drop(block.proj(ops::concat_cols(head_out))));
    Tensor m = block.fc2(ops::gelu(block.fc1(block.norm2(x))));
    x = ops::add(x, drop(m));
  }
  out.final_embeddings = params.final_norm(x);
  check_finite(out.final_embeddings.data(), "backbone output");
  return out;
}

}  // namespace svip
