#include "svip/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "svip/errors.hpp"

namespace svip {

namespace {
std::atomic<bool> g_op_checks{true};
}

void set_op_finite_checks(bool enabled) { g_op_checks = enabled; }
bool op_finite_checks() { return g_op_checks; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value " << values[i] << " at flat index " << i
         << " in " << what;
      throw NumericalError(os.str());
    }
  }
}

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape().size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("expected matrix, got " + shape_str(shape()));
  return shape()[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("expected matrix, got " + shape_str(shape()));
  return shape()[1];
}

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value.at(r * cols() + c);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::size_t Tensor::backward(double seed) const {
  if (numel() != 1) {
    throw UsageError("backward() requires a scalar, got shape " +
                     shape_str(shape()));
  }
  if (!requires_grad()) return 0;

  // Iterative post-order DFS; deep chains must not recurse.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += seed;
  std::size_t ran = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) {
      node->backward_fn(*node);
      ++ran;
    }
  }
  // Free intermediate gradient buffers; leaves keep theirs.
  for (Node* node : order) {
    if (node->backward_fn) std::vector<double>().swap(node->grad);
  }
  return ran;
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.set_requires_grad(requires_grad());
  return t;
}

}  // namespace svip
