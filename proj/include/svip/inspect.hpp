#pragma once

#include <string>
#include <vector>

#include "svip/checkpoint.hpp"
#include "svip/trainer.hpp"

namespace svip {

struct Inspection {
  std::size_t grid = 0;
  std::vector<double> pseudo;     // from the aggregated attention of Z0
  std::vector<double> predicted;  // patch classifier; empty if SSPS is off
  SelectionMask mask;
  std::vector<double> pooled;     // a-hat
  // Per attribute, one entry per patch; absent for unselected patches.
  std::vector<std::vector<std::optional<double>>> heatmaps;
  std::optional<int> zsl_class;  // only when class descriptors are given
  std::optional<int> gzsl_class;
};

// Runs inference on one image and collects the score grids, the selection,
// and the attribute maps. `classes` may be null.
Inspection inspect_image(const SvipModel& model, const TrainConfig& cfg,
                         const Tensor& image, const AttributeMatrix* classes);

// Writes pseudo/predicted/mask grids and attribute heatmaps as CSV and PGM,
// plus pooled.csv and summary.json, into `dir` (created if needed).
void write_inspection(const Inspection& ins, const std::string& dir,
                      const std::vector<std::string>& attribute_names = {});

}  // namespace svip
