#include "cmmp/net.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cmmp {

const char* to_string(DemMode m) {
  switch (m) {
    case DemMode::off: return "off";
    case DemMode::local: return "local";
    case DemMode::local_global: return "local_global";
    case DemMode::full: return "full";
  }
  return "full";
}

const char* to_string(Branches b) {
  return b == Branches::both ? "both" : "image_only";
}

DemMode dem_mode_from_string(const std::string& s) {
  if (s == "off") return DemMode::off;
  if (s == "local") return DemMode::local;
  if (s == "local_global") return DemMode::local_global;
  if (s == "full") return DemMode::full;
  throw ConfigError("unknown dem_mode '" + s + "'");
}

Branches branches_from_string(const std::string& s) {
  if (s == "both") return Branches::both;
  if (s == "image_only") return Branches::image_only;
  throw ConfigError("unknown branches '" + s + "'");
}

namespace {

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("bad value for " + key + ": '" + v + "'");
  return out;
}

}  // namespace

void NetConfig::validate() const {
  if (in_channels_a == 0 || in_channels_b == 0)
    throw ConfigError("input channel counts must be positive");
  if (base_channels < 4 || base_channels % 4 != 0)
    throw ConfigError("base_channels must be a positive multiple of 4");
  for (auto r : res_counts)
    if (r == 0) throw ConfigError("res_counts entries must be >= 1");
  if (spp_levels == 0) throw ConfigError("spp_levels must be >= 1");
  if (input_size == 0 || input_size % 32 != 0)
    throw ConfigError("input_size must be a positive multiple of 32");
}

std::string NetConfig::serialize() const {
  std::ostringstream out;
  out << "in_channels_a=" << in_channels_a << "\n";
  out << "in_channels_b=" << in_channels_b << "\n";
  out << "base_channels=" << base_channels << "\n";
  out << "res_counts=" << res_counts[0] << "," << res_counts[1] << "," << res_counts[2]
      << "," << res_counts[3] << "\n";
  out << "spp_levels=" << spp_levels << "\n";
  out << "input_size=" << input_size << "\n";
  out << "seed=" << seed << "\n";
  out << "dem_mode=" << to_string(dem_mode) << "\n";
  out << "branches=" << to_string(branches) << "\n";
  return out.str();
}

NetConfig NetConfig::parse(const std::string& text) {
  NetConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "in_channels_a") {
      cfg.in_channels_a = parse_u64(val, key);
    } else if (key == "in_channels_b") {
      cfg.in_channels_b = parse_u64(val, key);
    } else if (key == "base_channels") {
      cfg.base_channels = parse_u64(val, key);
    } else if (key == "res_counts") {
      std::istringstream vs(val);
      std::string item;
      std::size_t i = 0;
      while (std::getline(vs, item, ',')) {
        if (i >= 4) throw ConfigError("res_counts needs exactly 4 entries");
        cfg.res_counts[i++] = parse_u64(item, key);
      }
      if (i != 4) throw ConfigError("res_counts needs exactly 4 entries");
    } else if (key == "spp_levels") {
      cfg.spp_levels = parse_u64(val, key);
    } else if (key == "input_size") {
      cfg.input_size = parse_u64(val, key);
    } else if (key == "seed") {
      cfg.seed = parse_u64(val, key);
    } else if (key == "dem_mode") {
      cfg.dem_mode = dem_mode_from_string(val);
    } else if (key == "branches") {
      cfg.branches = branches_from_string(val);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

NetConfig NetConfig::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void NetConfig::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << serialize();
}

}  // namespace cmmp
