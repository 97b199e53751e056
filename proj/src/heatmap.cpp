#include "cmmp/heatmap.hpp"

#include <algorithm>
#include <cmath>

namespace cmmp {

RasterTile project_counts(const std::vector<TrajectorySample>& samples, const RasterSpec& spec) {
  spec.validate();
  const GeoBounds& b = spec.bounds;
  RasterTile counts(spec.H, spec.W, 1);
  const double lon_span = b.lon_u - b.lon_l;
  const double lat_span = b.lat_u - b.lat_l;
  for (const auto& s : samples) {
    if (s.lon < b.lon_l || s.lon > b.lon_u || s.lat < b.lat_l || s.lat > b.lat_u)
      throw SampleOutOfBounds("sample outside raster bounds");
    auto c = std::int64_t((s.lon - b.lon_l) / lon_span * double(spec.W));
    auto r = std::int64_t((b.lat_u - s.lat) / lat_span * double(spec.H));
    c = std::clamp<std::int64_t>(c, 0, std::int64_t(spec.W) - 1);
    r = std::clamp<std::int64_t>(r, 0, std::int64_t(spec.H) - 1);
    counts.at(std::size_t(r), std::size_t(c)) += 1.0f;
  }
  return counts;
}

RasterTile log_normalize(const RasterTile& counts) {
  RasterTile out(counts.H, counts.W, counts.C);
  float c_max = 0.0f;
  for (float v : counts.values) c_max = std::max(c_max, v);
  if (c_max == 0.0f) return out;
  const double denom = std::log(1.0 + double(c_max));
  for (std::size_t i = 0; i < counts.values.size(); ++i)
    out.values[i] = float(std::log(1.0 + double(counts.values[i])) / denom);
  return out;
}

RasterTile gaussian_smooth3(const RasterTile& tile) {
  if (tile.C != 1) throw ShapeMismatch("gaussian_smooth3 expects a single channel");
  static const double kKernel[3][3] = {
      {1.0 / 16, 2.0 / 16, 1.0 / 16},
      {2.0 / 16, 4.0 / 16, 2.0 / 16},
      {1.0 / 16, 2.0 / 16, 1.0 / 16},
  };
  RasterTile out(tile.H, tile.W, 1);
  const auto hi_r = std::int64_t(tile.H) - 1;
  const auto hi_c = std::int64_t(tile.W) - 1;
  for (std::int64_t r = 0; r <= hi_r; ++r) {
    for (std::int64_t c = 0; c <= hi_c; ++c) {
      double acc = 0.0;
      for (int dr = -1; dr <= 1; ++dr) {
        const auto rr = std::clamp<std::int64_t>(r + dr, 0, hi_r);
        for (int dc = -1; dc <= 1; ++dc) {
          const auto cc = std::clamp<std::int64_t>(c + dc, 0, hi_c);
          acc += kKernel[dr + 1][dc + 1] * double(tile.at(std::size_t(rr), std::size_t(cc)));
        }
      }
      out.at(std::size_t(r), std::size_t(c)) = float(acc);
    }
  }
  return out;
}

RasterTile render_heatmap(const TrajectoryStore& store, const RasterSpec& spec) {
  spec.validate();
  auto samples = store.query_bbox(spec.bounds);
  return gaussian_smooth3(log_normalize(project_counts(samples, spec)));
}

}  // namespace cmmp
