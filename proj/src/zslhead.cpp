#include "svip/zslhead.hpp"

#include <algorithm>
#include <atomic>
#include <iostream>
#include <cmath>
#include <set>

#include "svip/errors.hpp"
#include "svip/ops.hpp"

namespace svip {

AttributeMatrix::AttributeMatrix(std::vector<int> class_ids,
                                 std::vector<Split> splits, Matrix values)
    : class_ids_(std::move(class_ids)),
      splits_(std::move(splits)),
      values_(std::move(values)) {
  if (class_ids_.size() != splits_.size() || values_.rows != class_ids_.size()) {
    throw DataError("attribute matrix: inconsistent class count");
  }
  if (values_.cols == 0) throw DataError("attribute matrix: K must be >= 1");
  std::set<int> seen;
  for (std::size_t r = 0; r < class_ids_.size(); ++r) {
    if (!seen.insert(class_ids_[r]).second) {
      throw DataError("attribute matrix: duplicate class id " +
                      std::to_string(class_ids_[r]));
    }
    auto row = values_.row(r);
    if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) {
      throw DataError("attribute matrix: class " +
                      std::to_string(class_ids_[r]) + " has an all-zero row");
    }
  }
}

std::size_t AttributeMatrix::row_of(int class_id) const {
  auto it = std::find(class_ids_.begin(), class_ids_.end(), class_id);
  if (it == class_ids_.end()) {
    throw DataError("unknown class id " + std::to_string(class_id));
  }
  return static_cast<std::size_t>(it - class_ids_.begin());
}

bool AttributeMatrix::contains(int class_id) const {
  return std::find(class_ids_.begin(), class_ids_.end(), class_id) !=
         class_ids_.end();
}

std::vector<std::size_t> AttributeMatrix::rows_with(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < splits_.size(); ++r)
    if (splits_[r] == split) out.push_back(r);
  return out;
}

std::vector<std::size_t> AttributeMatrix::all_rows() const {
  std::vector<std::size_t> out(class_ids_.size());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = r;
  return out;
}

Tensor project_attributes(const Tensor& selected_outputs, const Linear& p2a) {
  if (selected_outputs.rank() != 2 || selected_outputs.rows() == 0) {
    throw ConfigError(
        "attribute projection needs at least one selected patch (M >= 1)");
  }
  return p2a(selected_outputs);
}

AttributePrediction pool_attributes(const Tensor& patch_attributes) {
  auto pooled = ops::max_rows(patch_attributes);
  return {patch_attributes, pooled.values, std::move(pooled.argmax)};
}

Tensor cosine_logits(const Tensor& pooled, const AttributeMatrix& classes,
                     std::span<const std::size_t> candidate_rows,
                     double sigma) {
  if (candidate_rows.empty()) throw UsageError("classify: no candidate classes");
  if (!(sigma > 0.0)) throw UsageError("classify: sigma must be positive");
  const std::size_t k = classes.num_attributes();
  if (pooled.numel() != k) {
    throw ShapeError("classify: predicted attributes have " +
                     std::to_string(pooled.numel()) + " entries, classes have " +
                     std::to_string(k));
  }
  // Unit-normalized class vectors as a constant [K, |candidates|] matrix.
  std::vector<double> cls(k * candidate_rows.size());
  for (std::size_t c = 0; c < candidate_rows.size(); ++c) {
    auto row = classes.row(candidate_rows[c]);
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < k; ++j)
      cls[j * candidate_rows.size() + c] = row[j] / norm;
  }
  double pooled_norm = 0.0;
  for (double v : pooled.data()) pooled_norm += v * v;
  if (std::sqrt(pooled_norm) <= 1e-8) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) {
      std::cerr << "warning: predicted attribute vector is all zero; cosine "
                   "uses the 1e-8 norm floor\n";
    }
  }
  Tensor unit = ops::l2_normalize_rows(ops::reshape(pooled, {1, k}), 1e-8);
  Tensor cos = ops::matmul(unit, Tensor::from({k, candidate_rows.size()},
                                              std::move(cls)));
  return ops::scale(cos, sigma);
}

Tensor classify(const Tensor& pooled, const AttributeMatrix& classes,
                std::span<const std::size_t> candidate_rows, double sigma) {
  return ops::softmax(cosine_logits(pooled, classes, candidate_rows, sigma), 1);
}

}  // namespace svip
