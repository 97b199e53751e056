#include "cmmp/trajectory.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace cmmp {

namespace {

constexpr char kHeader[] = "vid,lon,lat,t,sp,si";

// Grid cells are addressed from the (-180, -90) corner so keys stay
// nonnegative for all legal coordinates.
constexpr double kLonOrigin = -180.0;
constexpr double kLatOrigin = -90.0;

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view f, std::size_t line_no, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || ptr != f.data() + f.size() || !std::isfinite(v))
    throw MalformedRow(line_no, std::string("bad ") + what + " '" + std::string(f) + "'");
  return v;
}

std::int64_t parse_int(std::string_view f, std::size_t line_no, const char* what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || ptr != f.data() + f.size())
    throw MalformedRow(line_no, std::string("bad ") + what + " '" + std::string(f) + "'");
  return v;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace

void validate_bounds(const GeoBounds& b) {
  if (!b.valid()) throw InvalidBounds("bounds require lon_l < lon_u and lat_l < lat_u");
}

std::vector<TrajectorySample> parse_samples(std::istream& in) {
  std::vector<TrajectorySample> out;
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!saw_header) {
      if (line != kHeader)
        throw MalformedRow(line_no, "header must be '" + std::string(kHeader) + "'");
      saw_header = true;
      continue;
    }
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    auto fields = split_fields(line);
    if (fields.size() != 6)
      throw MalformedRow(line_no, "expected 6 fields, got " + std::to_string(fields.size()));
    TrajectorySample s;
    s.vid = std::string(fields[0]);
    s.lon = parse_double(fields[1], line_no, "lon");
    s.lat = parse_double(fields[2], line_no, "lat");
    s.t = parse_int(fields[3], line_no, "t");
    s.sp = parse_double(fields[4], line_no, "sp");
    s.si = parse_int(fields[5], line_no, "si");
    if (s.lon < -180.0 || s.lon > 180.0)
      throw RangeError(line_no, "lon out of [-180, 180]");
    if (s.lat < -90.0 || s.lat > 90.0)
      throw RangeError(line_no, "lat out of [-90, 90]");
    if (s.sp < 0.0) throw RangeError(line_no, "sp must be >= 0");
    if (s.si <= 0) throw RangeError(line_no, "si must be > 0");
    out.push_back(std::move(s));
  }
  if (!saw_header) throw MalformedRow(1, "missing header");
  return out;
}

std::vector<TrajectorySample> parse_samples(const std::string& text) {
  std::istringstream in(text);
  return parse_samples(in);
}

std::vector<TrajectorySample> parse_samples_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_samples(in);
}

void serialize_samples(const std::vector<TrajectorySample>& samples, std::ostream& out) {
  std::string buf(kHeader);
  buf.push_back('\n');
  for (const auto& s : samples) {
    buf += s.vid;
    buf.push_back(',');
    append_number(buf, s.lon);
    buf.push_back(',');
    append_number(buf, s.lat);
    buf.push_back(',');
    buf += std::to_string(s.t);
    buf.push_back(',');
    append_number(buf, s.sp);
    buf.push_back(',');
    buf += std::to_string(s.si);
    buf.push_back('\n');
    if (buf.size() > (1u << 16)) {
      out.write(buf.data(), std::streamsize(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), std::streamsize(buf.size()));
}

std::string serialize_samples(const std::vector<TrajectorySample>& samples) {
  std::ostringstream out;
  serialize_samples(samples, out);
  return out.str();
}

TrajectoryStore::TrajectoryStore(std::vector<TrajectorySample> samples, double cell_deg)
    : samples_(std::move(samples)), cell_deg_(cell_deg) {
  if (!(cell_deg > 0.0) || !std::isfinite(cell_deg))
    throw InvalidCellSize("cell_deg must be a positive finite number");
  for (std::uint32_t i = 0; i < samples_.size(); ++i)
    cells_[cell_key(samples_[i].lon, samples_[i].lat)].push_back(i);
}

std::uint64_t TrajectoryStore::cell_key(double lon, double lat) const {
  const auto cx = std::uint64_t(std::floor((lon - kLonOrigin) / cell_deg_));
  const auto cy = std::uint64_t(std::floor((lat - kLatOrigin) / cell_deg_));
  return (cx << 32) | (cy & 0xffffffffull);
}

std::size_t TrajectoryStore::indexed_count() const {
  std::size_t n = 0;
  for (const auto& [key, cell] : cells_) n += cell.size();
  return n;
}

std::vector<TrajectorySample> TrajectoryStore::query_bbox(const GeoBounds& b) const {
  validate_bounds(b);
  const auto cx0 = std::int64_t(std::floor((b.lon_l - kLonOrigin) / cell_deg_));
  const auto cx1 = std::int64_t(std::floor((b.lon_u - kLonOrigin) / cell_deg_));
  const auto cy0 = std::int64_t(std::floor((b.lat_l - kLatOrigin) / cell_deg_));
  const auto cy1 = std::int64_t(std::floor((b.lat_u - kLatOrigin) / cell_deg_));

  std::vector<std::uint32_t> hits;
  const auto candidate_cells =
      std::uint64_t(cx1 - cx0 + 1) * std::uint64_t(cy1 - cy0 + 1);
  if (candidate_cells <= cells_.size()) {
    for (std::int64_t cx = cx0; cx <= cx1; ++cx) {
      for (std::int64_t cy = cy0; cy <= cy1; ++cy) {
        auto it = cells_.find((std::uint64_t(cx) << 32) | (std::uint64_t(cy) & 0xffffffffull));
        if (it == cells_.end()) continue;
        for (std::uint32_t idx : it->second) {
          const auto& s = samples_[idx];
          if (b.contains(s.lon, s.lat)) hits.push_back(idx);
        }
      }
    }
  } else {
    // Query box covers more cells than exist; walking the map is cheaper.
    for (const auto& [key, cell] : cells_) {
      for (std::uint32_t idx : cell) {
        const auto& s = samples_[idx];
        if (b.contains(s.lon, s.lat)) hits.push_back(idx);
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  std::vector<TrajectorySample> out;
  out.reserve(hits.size());
  for (std::uint32_t idx : hits) out.push_back(samples_[idx]);
  return out;
}

TrajectoryStore build_store(std::vector<TrajectorySample> samples, double cell_deg) {
  return TrajectoryStore(std::move(samples), cell_deg);
}

}  // namespace cmmp
