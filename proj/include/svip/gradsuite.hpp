#pragma once

#include <map>
#include <string>
#include <vector>

#include "svip/config.hpp"
#include "svip/gradcheck.hpp"

namespace svip {

// The smallest end-to-end setting: 4x4 single-channel images cut into 2x2
// patches (N = 4), two layers, two heads, width 8, four attributes, two seen
// classes and one unseen class.
ViTConfig minimal_vit();
TrainConfig minimal_train();

struct GradSuiteResult {
  // One entry per parameter tensor, named "<variant>/<parameter>".
  std::vector<GradCheckEntry> entries;
  std::map<std::string, double> group_max;  // parameter group -> max rel error
  double max_rel_error() const;
  bool passed(double tolerance) const;
};

// Finite-difference check of the batch objective over every trainable
// parameter group. The full model covers backbone, patch classifier, W2P,
// P2A, class token and positional table; the free context vector and the
// class-token head are checked with W2P and P2A switched off respectively.
GradSuiteResult run_gradient_suite(const ViTConfig& vit, const TrainConfig& cfg,
                                   std::size_t num_unseen = 1,
                                   std::uint64_t seed = 7);

}  // namespace svip
