#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "svip/tensor.hpp"

// Differentiable primitives. Matrices are rank-2 row-major; "rows" ops treat a
// rank-1 tensor of length n as a 1 x n row where noted.
namespace svip::ops {

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a[m,n] + bias broadcast over rows; bias has n elements.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);
// x / s where s is a one-element tensor.
Tensor div_scalar(const Tensor& x, const Tensor& s);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean of a list of one-element tensors, summed in list order.
Tensor mean_of(std::span<const Tensor> scalars);
// Element `index` (flat) as a one-element tensor.
Tensor pick(const Tensor& a, std::size_t index);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact (erf) form
// Clamp to [lo, hi]; gradient is passed only where the input is inside.
Tensor clamp(const Tensor& a, double lo, double hi);

// Row-wise layer norm over the last axis with affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);
// Row-wise x / max(||x||, eps).
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-8);

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Adds the row vector v to the listed rows of x; other rows pass through.
Tensor add_to_rows(const Tensor& x, const Tensor& v,
                   std::span<const std::size_t> rows);

struct MaxRows {
  Tensor values;                    // [1, n]
  std::vector<std::size_t> argmax;  // 0-based row per column
};
// Column-wise max over rows, first index wins ties.
MaxRows max_rows(const Tensor& x);

// Inverted dropout. rate == 0 returns x unchanged.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace svip::ops
