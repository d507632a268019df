#pragma once

#include <string>

#include "svip/config.hpp"
#include "svip/model.hpp"

namespace svip {

struct Checkpoint {
  ViTConfig vit;
  TrainConfig train;
  SvipModel model;
};

// Binary layout: "SVIP", u32 version, u64 config length + key=value text,
// u64 tensor count, then per tensor: u64 name length + name, u32 rank,
// u64 extents, little-endian f64 values.
void save_checkpoint(const std::string& path, const SvipModel& model,
                     const TrainConfig& train);

// Throws DataError on a bad magic, version, truncation, unknown or missing
// tensor, or a shape that does not match the stored configuration.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace svip
