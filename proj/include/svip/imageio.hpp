#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace svip {

struct RasterImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 (PGM) or 3 (PPM)
  std::vector<std::uint8_t> pixels;  // row-major, channels innermost
};

// Binary P5/P6 with maxval 255.
void write_pnm(const std::string& path, const RasterImage& image);
RasterImage read_pnm(const std::string& path);

// Writes a grid of values as an 8-bit PGM, each cell enlarged to
// `cell_px` pixels. Finite values are min-max scaled to 1..255; cells whose
// value is empty render as a diagonal hatch (0/128). The scaling is written
// to `<path>.txt`.
void write_heatmap(const std::string& path, std::size_t grid_w,
                   std::size_t grid_h,
                   std::span<const std::optional<double>> cells,
                   std::size_t cell_px = 8);

}  // namespace svip
