#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cstnet/fbank.hpp"

namespace cstnet {

namespace io {

inline void write_u32le(std::ostream& out, uint32_t v) {
  char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
  out.write(b, 4);
}

inline uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("io: truncated u32");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

inline void write_f32le(std::ostream& out, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32le(out, u);
}

inline float read_f32le(std::istream& in) {
  const uint32_t u = read_u32le(in);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

// Writes via a temp file in the same directory, then renames, so a
// crashed writer never leaves a half-written artifact behind.
inline void atomic_write(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("io: cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("io: write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace io

// Binary feature dump: magic "FEAT", version u32=1, T u32, F u32,
// hop_ms u32, then row-major 32-bit little-endian floats.
inline void save_features(const std::string& path, const FeatureMatrix& m) {
  std::ostringstream out(std::ios::binary);
  out.write("FEAT", 4);
  io::write_u32le(out, 1);
  io::write_u32le(out, static_cast<uint32_t>(m.rows));
  io::write_u32le(out, static_cast<uint32_t>(m.cols));
  io::write_u32le(out, static_cast<uint32_t>(m.frame_hop_ms));
  for (int t = 0; t < m.rows; ++t)
    for (int f = 0; f < m.cols; ++f) io::write_f32le(out, m.at(t, f));
  io::atomic_write(path, out.str());
}

inline FeatureMatrix load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("feat: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FEAT", 4) != 0)
    throw std::runtime_error("feat: bad magic in " + path);
  const uint32_t version = io::read_u32le(in);
  if (version != 1)
    throw std::runtime_error("feat: unsupported version " +
                             std::to_string(version));
  const uint32_t rows = io::read_u32le(in);
  const uint32_t cols = io::read_u32le(in);
  const uint32_t hop = io::read_u32le(in);
  FeatureMatrix m = FeatureMatrix::zeros(static_cast<int>(rows),
                                         static_cast<int>(cols),
                                         static_cast<int>(hop));
  for (uint32_t t = 0; t < rows; ++t)
    for (uint32_t f = 0; f < cols; ++f)
      m.at(static_cast<int>(t), static_cast<int>(f)) = io::read_f32le(in);
  if (!in) throw std::runtime_error("feat: truncated payload in " + path);
  return m;
}

}  // namespace cstnet
