#pragma once

#include <vector>

#include "cmmp/raster.hpp"
#include "cmmp/trajectory.hpp"

namespace cmmp {

// Per-pixel sample counts. Pixel (r, c) collects samples with
//   c = floor((lon - lon_l) / (lon_u - lon_l) * W)
//   r = floor((lat_u - lat) / (lat_u - lat_l) * H)
// clamped to the raster, so row 0 is the north edge. Every sample must lie
// inside the closed bounds box.
RasterTile project_counts(const std::vector<TrajectorySample>& samples, const RasterSpec& spec);

// ln(1 + count) / ln(1 + max_count); all zeros when the tile is empty.
RasterTile log_normalize(const RasterTile& counts);

// 3x3 binomial Gaussian (1/16)[[1,2,1],[2,4,2],[1,2,1]] with replicate
// border padding. Single channel only.
RasterTile gaussian_smooth3(const RasterTile& tile);

// Full heat-map pipeline: query, project, normalize, smooth.
RasterTile render_heatmap(const TrajectoryStore& store, const RasterSpec& spec);

}  // namespace cmmp
