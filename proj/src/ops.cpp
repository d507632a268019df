#include "svip/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "svip/errors.hpp"

#ifdef SVIP_HAVE_CBLAS
#include <cblas.h>
#endif

namespace svip::ops {

namespace {

using BackwardFn = std::function<void(Node&)>;

Tensor make(Shape shape, std::vector<double> value,
            std::vector<Tensor> parents, BackwardFn backward,
            const char* what) {
  if (op_finite_checks()) check_finite(value, what);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent i, or nullptr when it does not need one.
double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected matrix, got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

#ifdef SVIP_HAVE_CBLAS

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, int(m), int(n), int(k),
              1.0, a, int(k), b, int(n), 1.0, c, int(n));
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, int(m), int(n), int(k),
              1.0, a, int(k), b, int(k), 1.0, c, int(n));
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k,
             std::size_t m, std::size_t n) {
  if (m == 0 || n == 0 || k == 0) return;
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(m), int(n), int(k),
              1.0, a, int(m), b, int(n), 1.0, c, int(n));
}

#else

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k,
             std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

#endif  // SVIP_HAVE_CBLAS

template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx, const char* what) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make(a.shape(), std::move(out), {a},
              [dfdx](Node& self) {
                double* ga = parent_grad(self, 0);
                if (!ga) return;
                const auto& xv = self.parents[0]->value;
                for (std::size_t i = 0; i < self.grad.size(); ++i) {
                  ga[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
                }
              },
              what);
}

struct AxisLayout {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(shape));
  }
  AxisLayout l;
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  l.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make({m, n}, std::move(out), {a, b},
              [m, k, n](Node& self) {
                const double* g = self.grad.data();
                if (double* ga = parent_grad(self, 0)) {
                  gemm_nt(g, self.parents[1]->value.data(), ga, m, n, k);
                }
                if (double* gb = parent_grad(self, 1)) {
                  gemm_tn(self.parents[0]->value.data(), g, gb, m, k, n);
                }
              },
              "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimensions differ " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                     "^T");
  }
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make({m, n}, std::move(out), {a, b},
              [m, k, n](Node& self) {
                const double* g = self.grad.data();
                if (double* ga = parent_grad(self, 0)) {
                  gemm_nn(g, self.parents[1]->value.data(), ga, m, n, k);
                }
                if (double* gb = parent_grad(self, 1)) {
                  gemm_tn(g, self.parents[0]->value.data(), gb, m, n, k);
                }
              },
              "matmul_nt");
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make({n, m}, std::move(out), {a},
              [m, n](Node& self) {
                double* ga = parent_grad(self, 0);
                if (!ga) return;
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j)
                    ga[i * n + j] += self.grad[j * m + i];
              },
              "transpose");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make(std::move(shape), std::move(out), {a},
              [](Node& self) {
                double* ga = parent_grad(self, 0);
                if (!ga) return;
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                  ga[i] += self.grad[i];
              },
              "reshape");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                for (std::size_t p = 0; p < 2; ++p) {
                  if (double* g = parent_grad(self, p)) {
                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                      g[i] += self.grad[i];
                  }
                }
              },
              "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
                }
                if (double* g = parent_grad(self, 1)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] -= self.grad[i];
                }
              },
              "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make(a.shape(), std::move(out), {a, b},
              [](Node& self) {
                const auto& xv = self.parents[0]->value;
                const auto& yv = self.parents[1]->value;
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * yv[i];
                }
                if (double* g = parent_grad(self, 1)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * xv[i];
                }
              },
              "mul");
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_bias");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) +
                     " does not match columns of " + shape_str(a.shape()));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto b = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return make(a.shape(), std::move(out), {a, bias},
              [m, n](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
                }
                if (double* g = parent_grad(self, 1)) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      g[j] += self.grad[i * n + j];
                }
              },
              "add_bias");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make(a.shape(), std::move(out), {a},
              [factor](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] * factor;
                }
              },
              "scale");
}

Tensor div_scalar(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeError("div_scalar: divisor must have one element, got " +
                     shape_str(s.shape()));
  }
  const double d = s.item();
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / d;
  return make(x.shape(), std::move(out), {x, s},
              [d](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i] / d;
                }
                if (double* g = parent_grad(self, 1)) {
                  double acc = 0.0;
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    acc += self.grad[i] * self.value[i];
                  g[0] -= acc / d;
                }
              },
              "div_scalar");
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make({1}, {acc}, {a},
              [](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  const double gv = self.grad[0];
                  const std::size_t n = self.parents[0]->value.size();
                  for (std::size_t i = 0; i < n; ++i) g[i] += gv;
                }
              },
              "sum");
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make({1}, {acc / n}, {a},
              [n](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  const double gv = self.grad[0] / n;
                  const std::size_t count = self.parents[0]->value.size();
                  for (std::size_t i = 0; i < count; ++i) g[i] += gv;
                }
              },
              "mean");
}

Tensor mean_of(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw UsageError("mean_of: empty list");
  double acc = 0.0;
  for (const auto& s : scalars) acc += s.item();
  const double n = static_cast<double>(scalars.size());
  std::vector<Tensor> parents(scalars.begin(), scalars.end());
  return make({1}, {acc / n}, std::move(parents),
              [n](Node& self) {
                const double gv = self.grad[0] / n;
                for (std::size_t i = 0; i < self.parents.size(); ++i) {
                  if (double* g = parent_grad(self, i)) g[0] += gv;
                }
              },
              "mean_of");
}

Tensor pick(const Tensor& a, std::size_t index) {
  if (index >= a.numel()) {
    throw ShapeError("pick: index " + std::to_string(index) +
                     " out of range for " + shape_str(a.shape()));
  }
  return make({1}, {a.data()[index]}, {a},
              [index](Node& self) {
                if (double* g = parent_grad(self, 0)) g[index] += self.grad[0];
              },
              "pick");
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto l = axis_layout(x.shape(), axis);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < l.len; ++i)
        mx = std::max(mx, xv[base + i * l.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < l.len; ++i) {
        const double e = std::exp(xv[base + i * l.inner] - mx);
        out[base + i * l.inner] = e;
        z += e;
      }
      for (std::size_t i = 0; i < l.len; ++i) out[base + i * l.inner] /= z;
    }
  }
  return make(x.shape(), std::move(out), {x},
              [l](Node& self) {
                double* g = parent_grad(self, 0);
                if (!g) return;
                const auto& y = self.value;
                const auto& gy = self.grad;
                for (std::size_t o = 0; o < l.outer; ++o) {
                  for (std::size_t in = 0; in < l.inner; ++in) {
                    const std::size_t base = o * l.len * l.inner + in;
                    double dot = 0.0;
                    for (std::size_t i = 0; i < l.len; ++i) {
                      const std::size_t k = base + i * l.inner;
                      dot += gy[k] * y[k];
                    }
                    for (std::size_t i = 0; i < l.len; ++i) {
                      const std::size_t k = base + i * l.inner;
                      g[k] += y[k] * (gy[k] - dot);
                    }
                  }
                }
              },
              "softmax");
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const auto l = axis_layout(x.shape(), axis);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double mx = -INFINITY;
      for (std::size_t i = 0; i < l.len; ++i)
        mx = std::max(mx, xv[base + i * l.inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < l.len; ++i)
        z += std::exp(xv[base + i * l.inner] - mx);
      const double lz = mx + std::log(z);
      for (std::size_t i = 0; i < l.len; ++i)
        out[base + i * l.inner] = xv[base + i * l.inner] - lz;
    }
  }
  return make(x.shape(), std::move(out), {x},
              [l](Node& self) {
                double* g = parent_grad(self, 0);
                if (!g) return;
                const auto& y = self.value;
                const auto& gy = self.grad;
                for (std::size_t o = 0; o < l.outer; ++o) {
                  for (std::size_t in = 0; in < l.inner; ++in) {
                    const std::size_t base = o * l.len * l.inner + in;
                    double total = 0.0;
                    for (std::size_t i = 0; i < l.len; ++i)
                      total += gy[base + i * l.inner];
                    for (std::size_t i = 0; i < l.len; ++i) {
                      const std::size_t k = base + i * l.inner;
                      g[k] += gy[k] - std::exp(y[k]) * total;
                    }
                  }
                }
              },
              "log_softmax");
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; }, "exp");
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; }, "log");
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; }, "relu");
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
               x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
      },
      "gelu");
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; },
      "clamp");
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.numel() != n || beta.numel() != n) {
    throw ShapeError("layer_norm: affine parameters do not match width " +
                     std::to_string(n));
  }
  std::vector<double> out(m * n);
  std::vector<double> xhat(m * n);
  std::vector<double> rstd(m);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = xv.data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mu) * rstd[i];
      xhat[i * n + j] = h;
      out[i * n + j] = h * gv[j] + bv[j];
    }
  }
  return make(x.shape(), std::move(out), {x, gamma, beta},
              [m, n, xhat = std::move(xhat),
               rstd = std::move(rstd)](Node& self) {
                const auto& g = self.grad;
                const auto& gam = self.parents[1]->value;
                if (double* gg = parent_grad(self, 1)) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      gg[j] += g[i * n + j] * xhat[i * n + j];
                }
                if (double* gb = parent_grad(self, 2)) {
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                }
                if (double* gx = parent_grad(self, 0)) {
                  const double inv_n = 1.0 / static_cast<double>(n);
                  for (std::size_t i = 0; i < m; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double d = g[i * n + j] * gam[j];
                      s1 += d;
                      s2 += d * xhat[i * n + j];
                    }
                    s1 *= inv_n;
                    s2 *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                      const double d = g[i * n + j] * gam[j];
                      gx[i * n + j] +=
                          rstd[i] * (d - s1 - xhat[i * n + j] * s2);
                    }
                  }
                }
              },
              "layer_norm");
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  const bool vec = x.rank() == 1;
  const std::size_t m = vec ? 1 : x.rows();
  const std::size_t n = vec ? x.numel() : x.cols();
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += xv[i * n + j] * xv[i * n + j];
    norms[i] = std::sqrt(ss);
    const double d = std::max(norms[i], eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] / d;
  }
  return make(x.shape(), std::move(out), {x},
              [m, n, eps, norms = std::move(norms)](Node& self) {
                double* gx = parent_grad(self, 0);
                if (!gx) return;
                const auto& y = self.value;
                const auto& g = self.grad;
                for (std::size_t i = 0; i < m; ++i) {
                  if (norms[i] > eps) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                      dot += y[i * n + j] * g[i * n + j];
                    for (std::size_t j = 0; j < n; ++j)
                      gx[i * n + j] +=
                          (g[i * n + j] - y[i * n + j] * dot) / norms[i];
                  } else {
                    for (std::size_t j = 0; j < n; ++j)
                      gx[i * n + j] += g[i * n + j] / eps;
                  }
                }
              },
              "l2_normalize_rows");
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (start + count > n) {
    throw ShapeError("slice_cols: range exceeds width " + std::to_string(n));
  }
  std::vector<double> out(m * count);
  auto xv = x.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data() + i * n + start, count, out.data() + i * count);
  return make({m, count}, std::move(out), {x},
              [m, n, start, count](Node& self) {
                double* g = parent_grad(self, 0);
                if (!g) return;
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < count; ++j)
                    g[i * n + start + j] += self.grad[i * count + j];
              },
              "slice_cols");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k],
                  out.data() + i * n + off);
    off += widths[k];
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make({m, n}, std::move(out), std::move(parents),
              [m, n, widths](Node& self) {
                std::size_t col = 0;
                for (std::size_t k = 0; k < widths.size(); ++k) {
                  if (double* g = parent_grad(self, k)) {
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < widths[k]; ++j)
                        g[i * widths[k] + j] += self.grad[i * n + col + j];
                  }
                  col += widths[k];
                }
              },
              "concat_cols");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw UsageError("concat_rows: no inputs");
  auto width = [](const Tensor& t) {
    return t.rank() == 1 ? t.numel() : t.cols();
  };
  const std::size_t n = width(parts.front());
  std::vector<std::size_t> sizes;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (width(p) != n) throw ShapeError("concat_rows: widths differ");
    sizes.push_back(p.numel());
    total += p.numel();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make({total / n, n}, std::move(out), std::move(parents),
              [sizes](Node& self) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < sizes.size(); ++k) {
                  if (double* g = parent_grad(self, k)) {
                    for (std::size_t i = 0; i < sizes[k]; ++i)
                      g[i] += self.grad[off + i];
                  }
                  off += sizes[k];
                }
              },
              "concat_rows");
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(rows.size() * n);
  auto xv = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) +
                       " out of range " + std::to_string(m));
    }
    std::copy_n(xv.data() + rows[r] * n, n, out.data() + r * n);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make({idx.size(), n}, std::move(out), {x},
              [n, idx](Node& self) {
                double* g = parent_grad(self, 0);
                if (!g) return;
                for (std::size_t r = 0; r < idx.size(); ++r)
                  for (std::size_t j = 0; j < n; ++j)
                    g[idx[r] * n + j] += self.grad[r * n + j];
              },
              "gather_rows");
}

Tensor add_to_rows(const Tensor& x, const Tensor& v,
                   std::span<const std::size_t> rows) {
  require_matrix(x, "add_to_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (v.numel() != n) {
    throw ShapeError("add_to_rows: vector " + shape_str(v.shape()) +
                     " does not match width " + std::to_string(n));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto vv = v.data();
  for (auto r : rows) {
    if (r >= m) throw ShapeError("add_to_rows: row out of range");
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += vv[j];
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make(x.shape(), std::move(out), {x, v},
              [n, idx](Node& self) {
                if (double* g = parent_grad(self, 0)) {
                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                    g[i] += self.grad[i];
                }
                if (double* g = parent_grad(self, 1)) {
                  for (auto r : idx)
                    for (std::size_t j = 0; j < n; ++j)
                      g[j] += self.grad[r * n + j];
                }
              },
              "add_to_rows");
}

MaxRows max_rows(const Tensor& x) {
  require_matrix(x, "max_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (m == 0) throw ShapeError("max_rows: no rows");
  auto xv = x.data();
  std::vector<double> out(n);
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = xv[j];
    for (std::size_t i = 1; i < m; ++i) {
      if (xv[i * n + j] > out[j]) {
        out[j] = xv[i * n + j];
        arg[j] = i;
      }
    }
  }
  MaxRows result;
  result.argmax = arg;
  result.values = make({1, n}, std::move(out), {x},
                       [n, arg](Node& self) {
                         double* g = parent_grad(self, 0);
                         if (!g) return;
                         for (std::size_t j = 0; j < n; ++j)
                           g[arg[j] * n + j] += self.grad[j];
                       },
                       "max_rows");
  return result;
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw UsageError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& v : mask) v = keep(rng) ? inv : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

}  // namespace svip::ops
