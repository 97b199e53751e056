#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cmmp/error.hpp"
#include "cmmp/trajectory.hpp"

namespace cmmp {

// H x W x C grid of 32-bit reals, row-major, channel-last. Row 0 is the
// north edge. Carries aerial images (C=3), heat-maps / probability maps /
// masks (C=1).
struct RasterTile {
  std::size_t H = 0, W = 0, C = 1;
  std::vector<float> values;  // size H * W * C

  RasterTile() = default;
  RasterTile(std::size_t h, std::size_t w, std::size_t c, float fill = 0.0f)
      : H(h), W(w), C(c), values(h * w * c, fill) {}

  float& at(std::size_t r, std::size_t c_, std::size_t ch = 0) {
    return values[(r * W + c_) * C + ch];
  }
  float at(std::size_t r, std::size_t c_, std::size_t ch = 0) const {
    return values[(r * W + c_) * C + ch];
  }
  std::size_t numel() const { return values.size(); }
};

// Geographic extent plus raster resolution of one tile.
struct RasterSpec {
  GeoBounds bounds;
  std::size_t H = 0, W = 0;

  void validate() const {
    validate_bounds(bounds);
    if (H == 0 || W == 0) throw InvalidBounds("raster size must be positive");
  }
};

// "RFT1" binary tile format: magic RFT1, u32le H, W, C, then H*W*C f32le
// values row-major channel-last.
void write_rft(const RasterTile& tile, const std::string& path);
RasterTile read_rft(const std::string& path);
std::vector<std::uint8_t> encode_rft(const RasterTile& tile);
RasterTile decode_rft(const std::vector<std::uint8_t>& bytes);

// Binary PGM (P5, maxval 255). Masks use 255 = road, 0 = background.
void write_pgm(const RasterTile& mask, const std::string& path);  // C=1, values {0,1}
RasterTile read_pgm(const std::string& path);                     // returns values {0,1}

}  // namespace cmmp
