#include "cmmp/raster.hpp"

#include <cstring>
#include <fstream>

namespace cmmp {

namespace {

void put_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 24));
}

std::uint32_t get_u32le(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
         (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace

std::vector<std::uint8_t> encode_rft(const RasterTile& tile) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + tile.values.size() * 4);
  out.insert(out.end(), {'R', 'F', 'T', '1'});
  put_u32le(out, std::uint32_t(tile.H));
  put_u32le(out, std::uint32_t(tile.W));
  put_u32le(out, std::uint32_t(tile.C));
  for (float v : tile.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32le(out, bits);
  }
  return out;
}

RasterTile decode_rft(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "RFT1", 4) != 0)
    throw FormatError("not an RFT1 file");
  RasterTile tile;
  tile.H = get_u32le(bytes.data() + 4);
  tile.W = get_u32le(bytes.data() + 8);
  tile.C = get_u32le(bytes.data() + 12);
  const std::size_t n = tile.H * tile.W * tile.C;
  if (bytes.size() != 16 + n * 4) throw FormatError("RFT1 payload size mismatch");
  tile.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = get_u32le(bytes.data() + 16 + i * 4);
    std::memcpy(&tile.values[i], &bits, 4);
  }
  return tile;
}

void write_rft(const RasterTile& tile, const std::string& path) {
  auto bytes = encode_rft(tile);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

RasterTile read_rft(const std::string& path) { return decode_rft(read_all(path)); }

void write_pgm(const RasterTile& mask, const std::string& path) {
  if (mask.C != 1) throw ShapeMismatch("PGM export requires a single channel");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << mask.W << " " << mask.H << "\n255\n";
  std::vector<std::uint8_t> row(mask.W);
  for (std::size_t r = 0; r < mask.H; ++r) {
    for (std::size_t c = 0; c < mask.W; ++c)
      row[c] = mask.at(r, c) > 0.5f ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!out) throw IoError("short write to " + path);
}

RasterTile read_pgm(const std::string& path) {
  auto bytes = read_all(path);
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_ws();
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + std::size_t(bytes[pos] - '0');
      ++pos;
      any = true;
    }
    if (!any) throw FormatError("bad PGM header");
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError("not a binary PGM file");
  pos = 2;
  const std::size_t w = read_int();
  const std::size_t h = read_int();
  const std::size_t maxval = read_int();
  if (maxval == 0 || maxval > 255) throw FormatError("unsupported PGM maxval");
  ++pos;  // single whitespace after maxval
  if (bytes.size() < pos + w * h) throw FormatError("truncated PGM payload");

  RasterTile mask(h, w, 1);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      mask.at(r, c) = bytes[pos + r * w + c] >= 128 ? 1.0f : 0.0f;
  return mask;
}

}  // namespace cmmp
