#include "cmmp/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cmmp/heatmap.hpp"

namespace cmmp {

namespace {

constexpr double kDegPerPixel = 1e-4;

struct Polyline {
  std::vector<std::pair<double, double>> pts;  // (x, y) pixel coordinates
  double width = 3.0;

  double length() const {
    double L = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      L += std::hypot(pts[i].first - pts[i - 1].first, pts[i].second - pts[i - 1].second);
    return L;
  }

  // Point at arc-length position d.
  std::pair<double, double> at(double d) const {
    for (std::size_t i = 1; i < pts.size(); ++i) {
      const double seg = std::hypot(pts[i].first - pts[i - 1].first,
                                    pts[i].second - pts[i - 1].second);
      if (d <= seg || i == pts.size() - 1) {
        const double f = seg > 0.0 ? std::clamp(d / seg, 0.0, 1.0) : 0.0;
        return {pts[i - 1].first + f * (pts[i].first - pts[i - 1].first),
                pts[i - 1].second + f * (pts[i].second - pts[i - 1].second)};
      }
      d -= seg;
    }
    return pts.back();
  }
};

// Random point on one of the four borders.
std::pair<double, double> border_point(Rng& rng, std::size_t size) {
  const double s = double(size);
  switch (rng.index(4)) {
    case 0: return {rng.uniform(0.0, s), 0.0};
    case 1: return {rng.uniform(0.0, s), s - 1.0};
    case 2: return {0.0, rng.uniform(0.0, s)};
    default: return {s - 1.0, rng.uniform(0.0, s)};
  }
}

Polyline random_line(Rng& rng, std::size_t size, double width) {
  Polyline line;
  auto a = border_point(rng, size);
  auto b = border_point(rng, size);
  // Reject near-degenerate lines by pushing the endpoint to the opposite side.
  if (std::hypot(a.first - b.first, a.second - b.second) < double(size) / 2.0)
    b = {double(size) - 1.0 - a.first, double(size) - 1.0 - a.second};
  const double mx = 0.5 * (a.first + b.first) + rng.uniform(-double(size) / 6.0, double(size) / 6.0);
  const double my = 0.5 * (a.second + b.second) + rng.uniform(-double(size) / 6.0, double(size) / 6.0);
  line.pts = {a, {std::clamp(mx, 0.0, double(size) - 1.0), std::clamp(my, 0.0, double(size) - 1.0)}, b};
  line.width = width;
  return line;
}

// Stamp a disk into a single-channel 0/1 raster.
void stamp_disk(std::vector<std::uint8_t>& plane, std::size_t size, double cx, double cy,
                double radius) {
  const int lo_x = std::max(0, int(std::floor(cx - radius)));
  const int hi_x = std::min(int(size) - 1, int(std::ceil(cx + radius)));
  const int lo_y = std::max(0, int(std::floor(cy - radius)));
  const int hi_y = std::min(int(size) - 1, int(std::ceil(cy + radius)));
  const double r2 = radius * radius;
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x) {
      const double dx = double(x) - cx, dy = double(y) - cy;
      if (dx * dx + dy * dy <= r2) plane[std::size_t(y) * size + std::size_t(x)] = 1;
    }
}

void stamp_polyline(std::vector<std::uint8_t>& plane, std::size_t size, const Polyline& line) {
  const double L = line.length();
  const double radius = line.width / 2.0;
  const int steps = std::max(1, int(std::ceil(L * 4.0)));
  for (int i = 0; i <= steps; ++i) {
    auto [x, y] = line.at(L * double(i) / double(steps));
    stamp_disk(plane, size, x, y, radius);
  }
}

void paint_plane(RasterTile& img, const std::vector<std::uint8_t>& plane, double r,
                 double g, double b, double noise, Rng& rng) {
  for (std::size_t y = 0; y < img.H; ++y)
    for (std::size_t x = 0; x < img.W; ++x) {
      if (!plane[y * img.W + x]) continue;
      const double n = rng.uniform(-noise, noise);
      img.at(y, x, 0) = float(std::clamp(r + n, 0.0, 1.0));
      img.at(y, x, 1) = float(std::clamp(g + n, 0.0, 1.0));
      img.at(y, x, 2) = float(std::clamp(b + n, 0.0, 1.0));
    }
}

double parse_num(const std::string& v, const std::string& key) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

void SceneSpec::validate() const {
  if (size == 0) throw ConfigError("scene size must be positive");
  if (road_width_min <= 0 || road_width_max < road_width_min)
    throw ConfigError("road width range invalid");
  if (occluder_min <= 0 || occluder_max < occluder_min)
    throw ConfigError("occluder size range invalid");
  if (traj_density < 0 || traj_noise_px < 0)
    throw ConfigError("trajectory parameters must be nonnegative");
  if (fog_alpha < 0.0 || fog_alpha > 1.0) throw ConfigError("fog_alpha must be in [0,1]");
}

std::string SceneSpec::serialize() const {
  std::ostringstream out;
  out << "size=" << size << "\n";
  out << "road_count=" << road_count << "\n";
  out << "road_width_min=" << road_width_min << "\n";
  out << "road_width_max=" << road_width_max << "\n";
  out << "occluder_count=" << occluder_count << "\n";
  out << "occluder_min=" << occluder_min << "\n";
  out << "occluder_max=" << occluder_max << "\n";
  out << "distractor_count=" << distractor_count << "\n";
  out << "traj_density=" << traj_density << "\n";
  out << "traj_noise_px=" << traj_noise_px << "\n";
  out << "spurious_cluster_count=" << spurious_cluster_count << "\n";
  out << "fog_alpha=" << fog_alpha << "\n";
  out << "seed=" << seed << "\n";
  return out.str();
}

SceneSpec SceneSpec::parse(const std::string& text) {
  SceneSpec s;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "size") s.size = std::size_t(parse_num(val, key));
    else if (key == "road_count") s.road_count = std::size_t(parse_num(val, key));
    else if (key == "road_width_min") s.road_width_min = parse_num(val, key);
    else if (key == "road_width_max") s.road_width_max = parse_num(val, key);
    else if (key == "occluder_count") s.occluder_count = std::size_t(parse_num(val, key));
    else if (key == "occluder_min") s.occluder_min = parse_num(val, key);
    else if (key == "occluder_max") s.occluder_max = parse_num(val, key);
    else if (key == "distractor_count") s.distractor_count = std::size_t(parse_num(val, key));
    else if (key == "traj_density") s.traj_density = parse_num(val, key);
    else if (key == "traj_noise_px") s.traj_noise_px = parse_num(val, key);
    else if (key == "spurious_cluster_count") s.spurious_cluster_count = std::size_t(parse_num(val, key));
    else if (key == "fog_alpha") s.fog_alpha = parse_num(val, key);
    else if (key == "seed") s.seed = std::uint64_t(parse_num(val, key));
    else throw ConfigError("unknown scene key '" + key + "'");
  }
  s.validate();
  return s;
}

SceneSpec SceneSpec::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void SceneSpec::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << serialize();
}

SynthResult synth_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t S = spec.size;

  SynthResult out;
  out.bounds = GeoBounds{0.0, 0.0, double(S) * kDegPerPixel, double(S) * kDegPerPixel};

  // Background with mild texture.
  RasterTile img(S, S, 3);
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      const double n = rng.uniform(-0.04, 0.04);
      img.at(y, x, 0) = float(0.30 + n);
      img.at(y, x, 1) = float(0.35 + n + rng.uniform(-0.02, 0.02));
      img.at(y, x, 2) = float(0.27 + n);
    }

  // Distractors first so roads paint over crossings.
  std::vector<std::uint8_t> scratch(S * S, 0);
  for (std::size_t i = 0; i < spec.distractor_count; ++i) {
    std::fill(scratch.begin(), scratch.end(), 0);
    Polyline line = random_line(rng, S, rng.uniform(1.5, 2.5));
    stamp_polyline(scratch, S, line);
    paint_plane(img, scratch, 0.50, 0.49, 0.47, 0.03, rng);
  }

  // Roads: mask plus a distinct gray band in the image.
  std::vector<Polyline> roads;
  std::vector<std::uint8_t> road_plane(S * S, 0);
  for (std::size_t i = 0; i < spec.road_count; ++i) {
    const double w = rng.uniform(spec.road_width_min, spec.road_width_max);
    roads.push_back(random_line(rng, S, w));
    stamp_polyline(road_plane, S, roads.back());
  }
  paint_plane(img, road_plane, 0.55, 0.55, 0.53, 0.03, rng);

  BinaryMask mask(S, S);
  std::copy(road_plane.begin(), road_plane.end(), mask.values.begin());

  // Tree-like occluders over random road points, image only.
  if (!roads.empty()) {
    for (std::size_t i = 0; i < spec.occluder_count; ++i) {
      const Polyline& r = roads[rng.index(roads.size())];
      auto [cx, cy] = r.at(rng.uniform(0.0, r.length()));
      std::fill(scratch.begin(), scratch.end(), 0);
      stamp_disk(scratch, S, cx, cy, rng.uniform(spec.occluder_min, spec.occluder_max));
      paint_plane(img, scratch, 0.13, 0.25, 0.11, 0.05, rng);
    }
  }

  // Trajectories along road centerlines.
  std::size_t road_px = 0;
  for (auto v : mask.values) road_px += v;
  const std::int64_t si_choices[4] = {10, 60, 180, 300};
  std::int64_t t0 = 1500000000;
  if (!roads.empty() && spec.traj_density > 0.0) {
    double total_len = 0.0;
    for (const auto& r : roads) total_len += r.length();
    const auto total_samples = std::size_t(std::llround(spec.traj_density * double(road_px)));
    for (std::size_t i = 0; i < total_samples; ++i) {
      // Pick a road proportional to arc length.
      double d = rng.uniform(0.0, total_len);
      const Polyline* road = &roads.back();
      for (const auto& r : roads) {
        const double L = r.length();
        if (d <= L) {
          road = &r;
          break;
        }
        d -= L;
      }
      auto [x, y] = road->at(d);
      x += rng.normal(0.0, spec.traj_noise_px);
      y += rng.normal(0.0, spec.traj_noise_px);
      TrajectorySample s;
      s.vid = "v" + std::to_string(i % 32);
      s.lon = (x + 0.5) * kDegPerPixel;
      s.lat = (double(S) - (y + 0.5)) * kDegPerPixel;  // row 0 is north
      s.t = t0++;
      s.sp = rng.uniform(0.0, 30.0);
      s.si = si_choices[rng.index(4)];
      out.samples.push_back(std::move(s));
    }
  }

  // Parking-lot-like blobs of fixes away from roads.
  for (std::size_t i = 0; i < spec.spurious_cluster_count; ++i) {
    double cx = 0, cy = 0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      cx = rng.uniform(4.0, double(S) - 4.0);
      cy = rng.uniform(4.0, double(S) - 4.0);
      if (!mask.at(std::size_t(cy), std::size_t(cx))) break;
    }
    for (std::size_t j = 0; j < 40; ++j) {
      const double x = cx + rng.normal(0.0, 2.5);
      const double y = cy + rng.normal(0.0, 2.5);
      TrajectorySample s;
      s.vid = "p" + std::to_string(i);
      s.lon = (x + 0.5) * kDegPerPixel;
      s.lat = (double(S) - (y + 0.5)) * kDegPerPixel;
      s.t = t0++;
      s.sp = rng.uniform(0.0, 5.0);
      s.si = si_choices[rng.index(4)];
      out.samples.push_back(std::move(s));
    }
  }

  // Heat-map from the raw fixes through the regular rendering path.
  TrajectoryStore store(out.samples, 8.0 * kDegPerPixel);
  RasterSpec rspec{out.bounds, S, S};
  RasterTile heat = render_heatmap(store, rspec);

  // Fog: blend toward white; alpha 1 gives an exactly white image.
  if (spec.fog_alpha > 0.0) {
    for (auto& v : img.values)
      v = float((1.0 - spec.fog_alpha) * double(v) + spec.fog_alpha);
  }
  for (auto& v : img.values) v = std::clamp(v, 0.0f, 1.0f);

  out.triplet = SampleTriplet{std::move(img), std::move(heat), std::move(mask)};
  return out;
}

RasterTile flip_h(const RasterTile& t) {
  RasterTile out(t.H, t.W, t.C);
  for (std::size_t r = 0; r < t.H; ++r)
    for (std::size_t c = 0; c < t.W; ++c)
      for (std::size_t ch = 0; ch < t.C; ++ch)
        out.at(r, c, ch) = t.at(r, t.W - 1 - c, ch);
  return out;
}

RasterTile flip_v(const RasterTile& t) {
  RasterTile out(t.H, t.W, t.C);
  for (std::size_t r = 0; r < t.H; ++r)
    for (std::size_t c = 0; c < t.W; ++c)
      for (std::size_t ch = 0; ch < t.C; ++ch)
        out.at(r, c, ch) = t.at(t.H - 1 - r, c, ch);
  return out;
}

RasterTile rot90(const RasterTile& t, int quarter_turns) {
  if (t.H != t.W) throw NonSquare("rotation requires square tiles");
  int q = ((quarter_turns % 4) + 4) % 4;
  RasterTile cur = t;
  for (int i = 0; i < q; ++i) {
    RasterTile out(cur.H, cur.W, cur.C);
    for (std::size_t r = 0; r < cur.H; ++r)
      for (std::size_t c = 0; c < cur.W; ++c)
        for (std::size_t ch = 0; ch < cur.C; ++ch)
          out.at(r, c, ch) = cur.at(cur.H - 1 - c, r, ch);  // one clockwise turn
    cur = std::move(out);
  }
  return cur;
}

namespace {

template <bool kNearest>
RasterTile crop_resize(const RasterTile& t, std::size_t r0, std::size_t c0, std::size_t s) {
  if (t.H != t.W) throw NonSquare("crop-resize requires square tiles");
  if (s == 0 || r0 + s > t.H || c0 + s > t.W)
    throw ShapeMismatch("crop window outside tile");
  const std::size_t n = t.H;
  RasterTile out(n, n, t.C);
  const double scale = double(s) / double(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double sy = (double(r) + 0.5) * scale - 0.5;
    for (std::size_t c = 0; c < n; ++c) {
      const double sx = (double(c) + 0.5) * scale - 0.5;
      if constexpr (kNearest) {
        const auto ry = std::size_t(std::clamp(std::floor(sy + 0.5), 0.0, double(s) - 1.0));
        const auto cx = std::size_t(std::clamp(std::floor(sx + 0.5), 0.0, double(s) - 1.0));
        for (std::size_t ch = 0; ch < t.C; ++ch)
          out.at(r, c, ch) = t.at(r0 + ry, c0 + cx, ch);
      } else {
        const double fy = std::clamp(sy, 0.0, double(s) - 1.0);
        const double fx = std::clamp(sx, 0.0, double(s) - 1.0);
        const auto y0 = std::size_t(fy);
        const auto x0 = std::size_t(fx);
        const auto y1 = std::min(y0 + 1, s - 1);
        const auto x1 = std::min(x0 + 1, s - 1);
        const double ty = fy - double(y0);
        const double tx = fx - double(x0);
        for (std::size_t ch = 0; ch < t.C; ++ch) {
          // lerp form keeps constant tiles exactly constant
          const double a = double(t.at(r0 + y0, c0 + x0, ch));
          const double b = double(t.at(r0 + y0, c0 + x1, ch));
          const double d = double(t.at(r0 + y1, c0 + x0, ch));
          const double e = double(t.at(r0 + y1, c0 + x1, ch));
          const double top = a + tx * (b - a);
          const double bot = d + tx * (e - d);
          out.at(r, c, ch) = float(top + ty * (bot - top));
        }
      }
    }
  }
  return out;
}

SampleTriplet transform_triplet(const SampleTriplet& t, RasterTile (*fn)(const RasterTile&)) {
  SampleTriplet out;
  out.image = fn(t.image);
  out.heatmap = fn(t.heatmap);
  out.mask = mask_from_tile(fn(tile_from_mask(t.mask)));
  return out;
}

}  // namespace

RasterTile crop_resize_bilinear(const RasterTile& t, std::size_t r0, std::size_t c0,
                                std::size_t s) {
  return crop_resize<false>(t, r0, c0, s);
}

RasterTile crop_resize_nearest(const RasterTile& t, std::size_t r0, std::size_t c0,
                               std::size_t s) {
  return crop_resize<true>(t, r0, c0, s);
}

std::vector<SampleTriplet> augment(const SampleTriplet& t, Rng& rng) {
  if (t.image.H != t.image.W) throw NonSquare("augmentation requires square tiles");
  if (t.heatmap.H != t.image.H || t.mask.H != t.image.H || t.heatmap.W != t.image.W ||
      t.mask.W != t.image.W)
    throw ShapeMismatch("triplet rasters must share one shape");

  std::vector<SampleTriplet> out;
  out.reserve(7);
  auto push = [&](RasterTile (*fn)(const RasterTile&)) {
    out.push_back(transform_triplet(t, nullptr, fn));
  };
  push(+[](const RasterTile& x) { return flip_h(x); });
  push(+[](const RasterTile& x) { return flip_v(x); });
  out.push_back({rot90(t.image, 1), rot90(t.heatmap, 1), mask_from_tile(rot90(tile_from_mask(t.mask), 1))});
  out.push_back({rot90(t.image, 2), rot90(t.heatmap, 2), mask_from_tile(rot90(tile_from_mask(t.mask), 2))});
  out.push_back({rot90(t.image, 3), rot90(t.heatmap, 3), mask_from_tile(rot90(tile_from_mask(t.mask), 3))});
  for (int crop = 0; crop < 2; ++crop) {
    const std::size_t n = t.image.H;
    const double scale = rng.uniform(0.7, 0.9);
    const auto s = std::max<std::size_t>(1, std::size_t(std::lround(scale * double(n))));
    const std::size_t r0 = rng.index(n - s + 1);
    const std::size_t c0 = rng.index(n - s + 1);
    SampleTriplet v;
    v.image = crop_resize_bilinear(t.image, r0, c0, s);
    v.heatmap = crop_resize_bilinear(t.heatmap, r0, c0, s);
    v.mask = mask_from_tile(crop_resize_nearest(tile_from_mask(t.mask), r0, c0, s));
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<SampleTriplet> augment_dataset(const std::vector<SampleTriplet>& in, Rng& rng) {
  std::vector<SampleTriplet> out;
  out.reserve(in.size() * 8);
  for (const auto& t : in) {
    out.push_back(t);
    for (auto& v : augment(t, rng)) out.push_back(std::move(v));
  }
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> make_splits(
    std::size_t n, double train_frac, std::uint64_t seed) {
  if (n == 0) throw EmptyInput("make_splits needs a nonempty input");
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("train_frac must be inside (0, 1)");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  const auto train_n = std::min<std::size_t>(n, std::size_t(std::ceil(double(n) * train_frac)));
  std::vector<std::size_t> train(idx.begin(), idx.begin() + std::ptrdiff_t(train_n));
  std::vector<std::size_t> val(idx.begin() + std::ptrdiff_t(train_n), idx.end());
  return {std::move(train), std::move(val)};
}

}  // namespace cmmp
