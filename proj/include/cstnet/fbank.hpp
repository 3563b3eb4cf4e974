#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cstnet/wav.hpp"

namespace cstnet {

struct FbankConfig {
  int n_mels = 40;
  int win_ms = 25;
  int hop_ms = 10;
  int n_fft = 512;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
  bool cmvn = true;

  void validate(int sample_rate) const {
    if (n_mels < 1) throw std::invalid_argument("fbank: n_mels < 1");
    if (win_ms < hop_ms) throw std::invalid_argument("fbank: win_ms < hop_ms");
    if (log_floor <= 0) throw std::invalid_argument("fbank: log_floor <= 0");
    if (!(f_min < f_max && f_max <= sample_rate / 2.0))
      throw std::invalid_argument("fbank: bad mel frequency range");
    if ((n_fft & (n_fft - 1)) != 0)
      throw std::invalid_argument("fbank: n_fft must be a power of two");
    if (n_fft < win_samples(sample_rate))
      throw std::invalid_argument("fbank: n_fft smaller than window");
  }
  int win_samples(int sample_rate) const { return sample_rate * win_ms / 1000; }
  int hop_samples(int sample_rate) const { return sample_rate * hop_ms / 1000; }
};

// T x F per-frame features with a frame validity mask. Also reused for
// encoder layer activations (where hop grows with the layer's stride).
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;  // row-major
  int frame_hop_ms = 10;
  std::vector<uint8_t> mask;  // length rows

  float& at(int t, int f) { return data[std::size_t(t) * cols + f]; }
  float at(int t, int f) const { return data[std::size_t(t) * cols + f]; }

  static FeatureMatrix zeros(int t, int f, int hop_ms = 10) {
    FeatureMatrix m;
    m.rows = t;
    m.cols = f;
    m.frame_hop_ms = hop_ms;
    m.data.assign(std::size_t(t) * f, 0.0f);
    m.mask.assign(std::size_t(t), 1);
    return m;
  }
  int valid_rows() const {
    int n = 0;
    for (uint8_t v : mask) n += v != 0;
    return n;
  }
};

namespace dsp {

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / double(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

inline std::vector<double> hamming_window(int len) {
  std::vector<double> w(static_cast<std::size_t>(len));
  for (int n = 0; n < len; ++n)
    w[std::size_t(n)] = 0.54 - 0.46 * std::cos(2.0 * M_PI * n / (len - 1));
  return w;
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

// Triangular mel filterbank on the HTK mel scale, rows = filters,
// cols = n_fft/2 + 1 power-spectrum bins.
inline std::vector<std::vector<double>> mel_filterbank(const FbankConfig& cfg,
                                                       int sample_rate) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> centers(std::size_t(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    centers[std::size_t(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  std::vector<std::vector<double>> fb(
      std::size_t(cfg.n_mels), std::vector<double>(std::size_t(n_bins), 0.0));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = centers[std::size_t(m)];
    const double mid = centers[std::size_t(m) + 1];
    const double hi = centers[std::size_t(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double f = double(b) * sample_rate / cfg.n_fft;
      if (f <= lo || f >= hi) continue;
      fb[std::size_t(m)][std::size_t(b)] =
          f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

// Center frequency (Hz) of mel band m under this config.
inline double mel_center_hz(const FbankConfig& cfg, int m) {
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  return mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
}

}  // namespace dsp

// Per-utterance per-dimension mean/variance normalization over valid
// frames. Dimensions with variance < 1e-12 are left mean-centered only.
inline FeatureMatrix apply_cmvn(const FeatureMatrix& f) {
  const int n_valid = f.valid_rows();
  if (n_valid < 2) throw std::invalid_argument("cmvn: needs at least 2 frames");
  FeatureMatrix out = f;
  for (int c = 0; c < f.cols; ++c) {
    double s = 0;
    for (int t = 0; t < f.rows; ++t)
      if (f.mask[std::size_t(t)]) s += f.at(t, c);
    const double mean = s / n_valid;
    double sq = 0;
    for (int t = 0; t < f.rows; ++t)
      if (f.mask[std::size_t(t)]) {
        const double d = f.at(t, c) - mean;
        sq += d * d;
      }
    const double var = sq / n_valid;
    const double scale = var < 1e-12 ? 1.0 : 1.0 / std::sqrt(var);
    for (int t = 0; t < f.rows; ++t)
      if (f.mask[std::size_t(t)])
        out.at(t, c) = static_cast<float>((f.at(t, c) - mean) * scale);
  }
  return out;
}

// Log-mel filterbank features: Hamming window, magnitude-squared FFT,
// triangular mel filters, natural log of (energy + log_floor), then
// optional per-utterance CMVN.
inline FeatureMatrix extract_fbank(const Waveform& w, const FbankConfig& cfg) {
  cfg.validate(w.sample_rate);
  const int win = cfg.win_samples(w.sample_rate);
  const int hop = cfg.hop_samples(w.sample_rate);
  const long n = static_cast<long>(w.samples.size());
  if (n < win)
    throw std::invalid_argument("fbank: waveform shorter than one window");
  const int frames = 1 + static_cast<int>((n - win) / hop);

  const std::vector<double> window = dsp::hamming_window(win);
  const auto fb = dsp::mel_filterbank(cfg, w.sample_rate);
  const int n_bins = cfg.n_fft / 2 + 1;

  FeatureMatrix out = FeatureMatrix::zeros(frames, cfg.n_mels, cfg.hop_ms);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.n_fft));
  std::vector<double> power(static_cast<std::size_t>(n_bins));
  for (int t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * hop;
    for (int i = 0; i < cfg.n_fft; ++i)
      buf[std::size_t(i)] =
          i < win ? std::complex<double>(
                        double(w.samples[std::size_t(start + i)]) *
                            window[std::size_t(i)],
                        0.0)
                  : std::complex<double>(0.0, 0.0);
    dsp::fft_radix2(buf);
    for (int b = 0; b < n_bins; ++b) power[std::size_t(b)] = std::norm(buf[std::size_t(b)]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0;
      for (int b = 0; b < n_bins; ++b) e += fb[std::size_t(m)][std::size_t(b)] * power[std::size_t(b)];
      out.at(t, m) = static_cast<float>(std::log(e + cfg.log_floor));
    }
  }
  if (cfg.cmvn && frames >= 2) return apply_cmvn(out);
  return out;
}

}  // namespace cstnet
