#include "svip/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "svip/errors.hpp"

namespace svip {

void write_pnm(const std::string& path, const RasterImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("write_pnm: only 1 or 3 channels are supported");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  in >> tok;
  return tok;
}

}  // namespace

RasterImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path);
  RasterImage img;
  const auto magic = next_token(in);
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw DataError(path + ": not a binary PGM/PPM image");
  }
  try {
    img.width = std::stoul(next_token(in));
    img.height = std::stoul(next_token(in));
    if (std::stoul(next_token(in)) != 255) {
      throw DataError(path + ": only maxval 255 is supported");
    }
  } catch (const std::logic_error&) {
    throw DataError(path + ": malformed image header");
  }
  in.get();  // single whitespace after maxval
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw DataError(path + ": truncated pixel data");
  }
  return img;
}

void write_heatmap(const std::string& path, std::size_t grid_w,
                   std::size_t grid_h,
                   std::span<const std::optional<double>> cells,
                   std::size_t cell_px) {
  if (cells.size() != grid_w * grid_h) {
    throw UsageError("write_heatmap: cell count does not match grid");
  }
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& c : cells) {
    if (c) {
      lo = std::min(lo, *c);
      hi = std::max(hi, *c);
    }
  }
  RasterImage img;
  img.width = grid_w * cell_px;
  img.height = grid_h * cell_px;
  img.pixels.assign(img.width * img.height, 0);
  for (std::size_t gy = 0; gy < grid_h; ++gy) {
    for (std::size_t gx = 0; gx < grid_w; ++gx) {
      const auto& c = cells[gy * grid_w + gx];
      std::uint8_t level = 0;
      if (c) {
        const double t = hi > lo ? (*c - lo) / (hi - lo) : 0.5;
        level = static_cast<std::uint8_t>(1 + std::lround(t * 254.0));
      }
      for (std::size_t y = 0; y < cell_px; ++y) {
        for (std::size_t x = 0; x < cell_px; ++x) {
          std::uint8_t v = level;
          if (!c) v = ((x + y) % 4 == 0) ? 128 : 0;
          img.pixels[(gy * cell_px + y) * img.width + gx * cell_px + x] = v;
        }
      }
    }
  }
  write_pnm(path, img);
  std::ofstream side(path + ".txt");
  side.precision(17);
  side << "min=" << lo << "\nmax=" << hi
       << "\n# pixel = 1 + round(254 * (value - min) / (max - min)); "
          "hatched cells (0/128) are unselected patches\n";
}

}  // namespace svip
