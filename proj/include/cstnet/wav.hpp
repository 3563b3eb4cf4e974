#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cstnet {

struct Waveform {
  std::vector<float> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;
};

namespace detail {

inline uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("wav: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

inline uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw std::runtime_error("wav: truncated file");
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}

}  // namespace detail

// Reads a RIFF/WAVE file. Accepts PCM 16-bit mono at 16 kHz only; there is
// no resampler, so anything else is rejected up front.
inline Waveform load_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("wav: malformed header (missing RIFF): " + path);
  detail::read_u32le(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("wav: malformed header (missing WAVE): " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> pcm;
  bool have_data = false;

  while (in.peek() != EOF) {
    in.read(tag, 4);
    if (!in) break;
    const uint32_t chunk_size = detail::read_u32le(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw std::runtime_error("wav: short fmt chunk");
      format = detail::read_u16le(in);
      channels = detail::read_u16le(in);
      rate = detail::read_u32le(in);
      detail::read_u32le(in);  // byte rate
      detail::read_u16le(in);  // block align
      bits = detail::read_u16le(in);
      in.ignore(chunk_size - 16 + (chunk_size & 1));
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data before fmt chunk");
      pcm.resize(chunk_size / 2);
      in.read(reinterpret_cast<char*>(pcm.data()),
              static_cast<std::streamsize>(pcm.size() * 2));
      if (!in) throw std::runtime_error("wav: truncated data chunk");
      have_data = true;
      in.ignore(chunk_size & 1);
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }

  if (!have_fmt || !have_data)
    throw std::runtime_error("wav: missing fmt or data chunk: " + path);
  if (format != 1 || bits != 16)
    throw std::runtime_error("wav: unsupported encoding (PCM-16 required)");
  if (channels != 1)
    throw std::runtime_error("wav: unsupported channel count " +
                             std::to_string(channels));
  if (rate != 16000)
    throw std::runtime_error("wav: unsupported sample rate " +
                             std::to_string(rate));
  if (pcm.empty()) throw std::runtime_error("wav: empty audio");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i)
    w.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;
  return w;
}

// Writes PCM-16 mono; samples are clamped to [-1, 1).
inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  auto u32 = [&](uint32_t v) {
    char b[4] = {char(v), char(v >> 8), char(v >> 16), char(v >> 24)};
    out.write(b, 4);
  };
  auto u16 = [&](uint16_t v) {
    char b[2] = {char(v), char(v >> 8)};
    out.write(b, 2);
  };
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  u32(16);
  u16(1);  // PCM
  u16(1);  // mono
  u32(static_cast<uint32_t>(w.sample_rate));
  u32(static_cast<uint32_t>(w.sample_rate) * 2);
  u16(2);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (float s : w.samples) {
    const float c = std::min(std::max(s, -1.0f), 32767.0f / 32768.0f);
    const int16_t q = static_cast<int16_t>(std::lround(c * 32768.0f));
    u16(static_cast<uint16_t>(q));
  }
}

}  // namespace cstnet
