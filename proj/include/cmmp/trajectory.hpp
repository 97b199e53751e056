#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cmmp/error.hpp"

namespace cmmp {

// One GPS fix: {vid, lon, lat, t, sp, si}.
struct TrajectorySample {
  std::string vid;     // vehicle id, opaque
  double lon = 0.0;    // decimal degrees, [-180, 180]
  double lat = 0.0;    // decimal degrees, [-90, 90]
  std::int64_t t = 0;  // unix seconds
  double sp = 0.0;     // speed, unit opaque, >= 0; carried verbatim
  std::int64_t si = 1; // sampling interval, seconds, > 0

  bool operator==(const TrajectorySample&) const = default;
};

// Axis-aligned geographic box, lower/upper corners in degrees.
struct GeoBounds {
  double lon_l = 0.0, lat_l = 0.0, lon_u = 0.0, lat_u = 0.0;

  bool valid() const { return lon_l < lon_u && lat_l < lat_u; }

  // Half-open membership [lon_l, lon_u) x [lat_l, lat_u), so adjacent tiles
  // partition samples without double counting.
  bool contains(double lon, double lat) const {
    return lon >= lon_l && lon < lon_u && lat >= lat_l && lat < lat_u;
  }
};

void validate_bounds(const GeoBounds& b);  // throws InvalidBounds

// CSV surface. First line must be exactly `vid,lon,lat,t,sp,si`; fields
// comma separated, no quoting; newline LF or CRLF.
std::vector<TrajectorySample> parse_samples(std::istream& in);
std::vector<TrajectorySample> parse_samples(const std::string& text);
std::vector<TrajectorySample> parse_samples_file(const std::string& path);
void serialize_samples(const std::vector<TrajectorySample>& samples, std::ostream& out);
std::string serialize_samples(const std::vector<TrajectorySample>& samples);

// Uniform-grid spatial index. Built once, immutable afterwards; queries are
// safe from any number of threads.
class TrajectoryStore {
 public:
  TrajectoryStore(std::vector<TrajectorySample> samples, double cell_deg);

  const std::vector<TrajectorySample>& samples() const { return samples_; }
  double cell_deg() const { return cell_deg_; }

  // Sum of per-cell sizes; equals samples().size() by construction.
  std::size_t indexed_count() const;

  // Exactly the samples inside `b` (half-open), in ascending original index
  // order. Duplicates are returned with multiplicity.
  std::vector<TrajectorySample> query_bbox(const GeoBounds& b) const;

 private:
  std::uint64_t cell_key(double lon, double lat) const;

  std::vector<TrajectorySample> samples_;
  double cell_deg_ = 0.0;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

TrajectoryStore build_store(std::vector<TrajectorySample> samples, double cell_deg);

}  // namespace cmmp
