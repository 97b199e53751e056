#pragma once

#include <cstring>
#include <fstream>

#include "cmmp/optim.hpp"

namespace cmmp {

namespace detail {

inline void ck_put_u16(std::ofstream& out, std::uint16_t v) {
  const char b[2] = {char(v & 0xff), char(v >> 8)};
  out.write(b, 2);
}

inline void ck_put_u32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                     char((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void ck_put_f32(std::ofstream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  ck_put_u32(out, bits);
}

struct CkReader {
  explicit CkReader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw IoError("cannot open " + path);
  }
  void bytes(char* dst, std::size_t n) {
    in.read(dst, std::streamsize(n));
    if (std::size_t(in.gcount()) != n) throw CorruptCheckpoint("truncated checkpoint");
  }
  std::uint16_t u16() {
    unsigned char b[2];
    bytes(reinterpret_cast<char*>(b), 2);
    return std::uint16_t(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    bytes(reinterpret_cast<char*>(b), 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::ifstream in;
};

}  // namespace detail

template <typename T>
void save_checkpoint(const ParamSet<T>& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("CKP1", 4);
  detail::ck_put_u32(out, std::uint32_t(params.size()));
  for (const auto& p : params) {
    detail::ck_put_u16(out, std::uint16_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    detail::ck_put_u32(out, std::uint32_t(p.value.rank()));
    for (std::size_t d = 0; d < p.value.rank(); ++d)
      detail::ck_put_u32(out, std::uint32_t(p.value.dim(d)));
    for (const T v : p.value.values()) detail::ck_put_f32(out, float(v));
  }
  if (!out) throw IoError("short write to " + path);
}

// Fills an already-built parameter set; the file must list the same names,
// order and shapes the configuration produces.
template <typename T>
void load_checkpoint(const std::string& path, ParamSet<T>& params) {
  detail::CkReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "CKP1", 4) != 0)
    throw CorruptCheckpoint("bad checkpoint magic");
  const std::uint32_t count = r.u32();
  if (count != params.size())
    throw ShapeMismatch("checkpoint has " + std::to_string(count) + " parameters, config needs " +
                        std::to_string(params.size()));
  for (std::size_t i = 0; i < count; ++i) {
    auto& p = params[i];
    const std::uint16_t name_len = r.u16();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    if (name != p.name)
      throw ShapeMismatch("checkpoint parameter '" + name + "' where config expects '" +
                          p.name + "'");
    const std::uint32_t rank = r.u32();
    if (rank != p.value.rank())
      throw ShapeMismatch("checkpoint rank mismatch for " + name);
    for (std::size_t d = 0; d < rank; ++d) {
      if (r.u32() != p.value.dim(d))
        throw ShapeMismatch("checkpoint shape mismatch for " + name);
    }
    for (auto& v : p.value.values()) v = T(r.f32());
    p.m.clear();
    p.v.clear();
  }
  // Trailing bytes mean the file does not match the declared count.
  char extra;
  r.in.read(&extra, 1);
  if (r.in.gcount() != 0) throw CorruptCheckpoint("trailing bytes in checkpoint");
}

}  // namespace cmmp
