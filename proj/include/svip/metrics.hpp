#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svip {

// H = 2SU / (S + U); 0 when both are 0. Throws UsageError on negatives.
double harmonic_mean(double unseen, double seen);

// Class-balanced top-1 accuracy in percent: the mean over `classes` of each
// class's accuracy. Classes without samples are skipped (and reported through
// `skipped` when given). Throws DataError if a label is outside `classes`.
double top1_per_class(std::span<const int> predictions,
                      std::span<const int> labels, std::span<const int> classes,
                      std::vector<int>* skipped = nullptr);

// Area under the ROC curve of `scores` against binary `positive` labels, with
// ties counted as one half. Empty optional when either class is absent.
std::optional<double> roc_auc(std::span<const double> scores,
                              std::span<const std::uint8_t> positive);

struct EvalReport {
  double t1 = 0.0;  // ZSL: unseen test images over unseen candidates
  double u = 0.0;   // GZSL: unseen test images over all classes
  double s = 0.0;   // GZSL: seen test images over all classes
  double h = 0.0;
  // Patch-selection quality on unseen test images with ground-truth glyph
  // cells: mean per-image ROC AUC of r-hat, and the fraction of images whose
  // mean glyph-cell score exceeds their mean noise-cell score.
  std::optional<double> selection_auc;
  std::optional<double> selection_hit_rate;

  bool operator==(const EvalReport&) const = default;
};

// Percentages with one decimal, e.g. "T1=80.4 U=72.8 S=79.7 H=76.1".
std::string format_report(const EvalReport& r);
// Machine-readable single line (JSON object).
std::string report_json(const EvalReport& r);

}  // namespace svip
