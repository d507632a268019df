#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace svip {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// One vertex of the define-by-run graph. Non-leaf nodes keep their parents
// alive until the output tensor is released, so a graph lives exactly as long
// as the loss tensor that roots it.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad();
};

// Reference-semantics handle to a node. Copies share storage and gradient,
// which is what parameters need; use clone() for an independent value copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const double> data() const;
  // Direct write access; intended for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from a scalar. Leaves accumulate (sum) into their
  // existing grads. Returns the number of graph nodes whose backward rule ran.
  std::size_t backward(double seed = 1.0) const;

  Tensor detach() const;
  Tensor clone() const;
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Throws NumericalError naming `what` if any value is NaN/Inf.
void check_finite(std::span<const double> values, const char* what);

// When false, op outputs are not scanned for NaN/Inf (step-level checks in the
// trainer still run). Defaults to true.
void set_op_finite_checks(bool enabled);
bool op_finite_checks();

}  // namespace svip
