#pragma once

#include <span>
#include <string>
#include <vector>

#include "svip/matrix.hpp"
#include "svip/nn.hpp"
#include "svip/tensor.hpp"

namespace svip {

enum class Split { kSeen, kUnseen };

// Class-level attribute descriptors for every class, seen and unseen.
class AttributeMatrix {
 public:
  AttributeMatrix() = default;
  // Validates: unique ids, equal K, no all-zero row. Throws DataError.
  AttributeMatrix(std::vector<int> class_ids, std::vector<Split> splits,
                  Matrix values);

  std::size_t num_classes() const { return class_ids_.size(); }
  std::size_t num_attributes() const { return values_.cols; }
  const std::vector<int>& class_ids() const { return class_ids_; }
  const std::vector<Split>& splits() const { return splits_; }
  const Matrix& values() const { return values_; }
  std::span<const double> row(std::size_t r) const { return values_.row(r); }

  // Row index of a class id; throws DataError if absent.
  std::size_t row_of(int class_id) const;
  bool contains(int class_id) const;
  std::vector<std::size_t> rows_with(Split split) const;
  std::vector<std::size_t> all_rows() const;

 private:
  std::vector<int> class_ids_;
  std::vector<Split> splits_;
  Matrix values_;
};

struct AttributePrediction {
  Tensor patch_attributes;            // A-hat, [M, K]
  Tensor pooled;                      // a-hat, [1, K]
  std::vector<std::size_t> argmax;    // row of A-hat (0-based) per attribute
};

// Patch-to-attribute projection applied row-wise: [M, C] -> [M, K].
// Throws ConfigError when there are no rows.
Tensor project_attributes(const Tensor& selected_outputs, const Linear& p2a);

// Column-wise max over patches, first row wins ties.
AttributePrediction pool_attributes(const Tensor& patch_attributes);

// sigma * cos(a-hat, a_y) for each candidate row; [1, |candidates|].
Tensor cosine_logits(const Tensor& pooled, const AttributeMatrix& classes,
                     std::span<const std::size_t> candidate_rows, double sigma);

// Softmax over candidates of sigma * cos(a-hat, a_y).
Tensor classify(const Tensor& pooled, const AttributeMatrix& classes,
                std::span<const std::size_t> candidate_rows, double sigma);

}  // namespace svip
