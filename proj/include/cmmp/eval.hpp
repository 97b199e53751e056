#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cmmp/error.hpp"
#include "cmmp/raster.hpp"

namespace cmmp {

// H x W mask of {0,1}.
struct BinaryMask {
  std::size_t H = 0, W = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : H(h), W(w), values(h * w, 0) {}

  std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * W + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * W + c]; }

  bool operator==(const BinaryMask&) const = default;
};

BinaryMask mask_from_tile(const RasterTile& tile);  // C=1, values {0,1}
RasterTile tile_from_mask(const BinaryMask& mask);

// Road iff probability strictly greater than tau.
BinaryMask binarize(const RasterTile& prob, double tau = 0.5);

// Per-tile intersection/union pixel counts and IoU.
struct TileResult {
  std::string id;
  std::size_t intersection = 0;
  std::size_t union_ = 0;
  double iou = 1.0;
};

TileResult tile_result(std::string id, const BinaryMask& estimated, const BinaryMask& truth);

// |a n b| / |a u b|; two empty masks score 1.0 so a perfectly predicted
// all-background tile is not penalized.
double iou(const BinaryMask& estimated, const BinaryMask& truth);

// Mean of per-tile IoU.
double a_iou(const std::vector<TileResult>& tiles);
double a_iou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs);

// Sum of intersections over sum of unions; equals stitched-map IoU when the
// tiles partition the study area.
double g_iou(const std::vector<TileResult>& tiles);
double g_iou(const std::vector<std::pair<BinaryMask, BinaryMask>>& pairs);

// Report lines `tile_id,intersection,union,iou` followed by A_IoU and G_IoU
// rows, all IoU values with 4 decimal places.
std::string format_report(const std::vector<TileResult>& tiles);

}  // namespace cmmp
