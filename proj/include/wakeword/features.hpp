/* Copyright 2026 The Wakeword Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wakeword/common.hpp"
#include "wakeword/matrix.hpp"

namespace wakeword {

// 80-dim log-Mel filterbank over 25 ms windows every 10 ms at 16 kHz.
// These constants are baked into every checkpoint header; decoding with a
// frontend that disagrees is a config-mismatch error, not a silent skew.
struct FeatureConfig {
  int sample_rate_hz = 16000;
  int frame_length = 400;   // 25 ms
  int frame_shift = 160;    // 10 ms
  int fft_size = 512;
  int num_mels = 80;
  double mel_low_hz = 20.0;
  double mel_high_hz = 7600.0;
  double preemphasis = 0.97;
  double energy_floor = 1e-10;
  // Fixed global offset added to every log energy. Stands in for utterance
  // level mean normalization, which would break causal streaming.
  double log_offset = 0.0;

  bool operator==(const FeatureConfig&) const = default;
};

// T = 1 + floor((n - frame_length) / frame_shift); 0 when the signal is
// shorter than one window.
inline size_t num_frames(size_t n_samples, const FeatureConfig& cfg = {}) {
  if (n_samples < static_cast<size_t>(cfg.frame_length)) return 0;
  return 1 + (n_samples - static_cast<size_t>(cfg.frame_length)) /
                 static_cast<size_t>(cfg.frame_shift);
}

namespace detail {

// Iterative radix-2 FFT with precomputed bit-reversal and twiddles.
template <class T>
class FftPlan {
 public:
  explicit FftPlan(size_t n) : n_(n) {
    check_arg(n >= 2 && (n & (n - 1)) == 0, "FFT size must be a power of two");
    bitrev_.resize(n);
    size_t log2n = 0;
    while ((size_t{1} << log2n) < n) ++log2n;
    for (size_t i = 0; i < n; ++i) {
      size_t r = 0;
      for (size_t b = 0; b < log2n; ++b)
        if (i & (size_t{1} << b)) r |= size_t{1} << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    const double two_pi = 6.283185307179586476925286766559;
    for (size_t k = 0; k < n / 2; ++k) {
      double a = -two_pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {static_cast<T>(std::cos(a)), static_cast<T>(std::sin(a))};
    }
  }

  void transform(std::vector<std::complex<T>>& a) const {
    for (size_t i = 0; i < n_; ++i) {
      size_t j = bitrev_[i];
      if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n_; len <<= 1) {
      size_t half = len >> 1;
      size_t step = n_ / len;
      for (size_t base = 0; base < n_; base += len) {
        for (size_t k = 0; k < half; ++k) {
          std::complex<T> w = twiddle_[k * step];
          std::complex<T> u = a[base + k];
          std::complex<T> v = a[base + k + half] * w;
          a[base + k] = u + v;
          a[base + k + half] = u - v;
        }
      }
    }
  }

  size_t size() const { return n_; }

 private:
  size_t n_;
  std::vector<size_t> bitrev_;
  std::vector<std::complex<T>> twiddle_;
};

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

// Triangular filters with unit peaks on the FFT bin grid.
template <class T>
class MelBank {
 public:
  explicit MelBank(const FeatureConfig& cfg) : cfg_(cfg) {
    int bins = cfg.fft_size / 2 + 1;
    double mel_lo = hz_to_mel(cfg.mel_low_hz);
    double mel_hi = hz_to_mel(cfg.mel_high_hz);
    std::vector<double> corners(cfg.num_mels + 2);
    for (int i = 0; i < cfg.num_mels + 2; ++i) {
      double mel = mel_lo + (mel_hi - mel_lo) * i / (cfg.num_mels + 1);
      corners[i] = 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    }
    double bin_hz = static_cast<double>(cfg.sample_rate_hz) / cfg.fft_size;
    start_bin_.resize(cfg.num_mels);
    weights_.resize(cfg.num_mels);
    for (int m = 0; m < cfg.num_mels; ++m) {
      double f0 = corners[m], f1 = corners[m + 1], f2 = corners[m + 2];
      int first = -1;
      std::vector<T> w;
      for (int k = 0; k < bins; ++k) {
        double f = k * bin_hz;
        double v = 0.0;
        if (f > f0 && f < f1)
          v = (f - f0) / (f1 - f0);
        else if (f >= f1 && f < f2)
          v = (f2 - f) / (f2 - f1);
        if (v > 0.0) {
          if (first < 0) first = k;
          w.push_back(static_cast<T>(v));
        } else if (first >= 0) {
          break;
        }
      }
      start_bin_[m] = first < 0 ? 0 : first;
      weights_[m] = std::move(w);
    }
  }

  // power: fft_size/2+1 magnitude-squared bins -> num_mels log energies
  void apply(const T* power, T* out) const {
    const T floor_v = static_cast<T>(cfg_.energy_floor);
    const T offset = static_cast<T>(cfg_.log_offset);
    for (int m = 0; m < cfg_.num_mels; ++m) {
      T acc = T(0);
      const auto& w = weights_[m];
      const T* p = power + start_bin_[m];
      for (size_t k = 0; k < w.size(); ++k) acc += w[k] * p[k];
      if (acc < floor_v) acc = floor_v;
      out[m] = std::log(acc) + offset;
    }
  }

 private:
  FeatureConfig cfg_;
  std::vector<int> start_bin_;
  std::vector<std::vector<T>> weights_;
};

// Shared per-frame kernel. The streaming and batch paths both call this on
// identical sample windows, which is what makes their outputs bit-exact.
template <class T>
class FrameComputer {
 public:
  explicit FrameComputer(const FeatureConfig& cfg)
      : cfg_(cfg), fft_(static_cast<size_t>(cfg.fft_size)), mel_(cfg) {
    window_.resize(cfg.frame_length);
    const double two_pi = 6.283185307179586476925286766559;
    for (int i = 0; i < cfg.frame_length; ++i)
      window_[i] = static_cast<T>(
          0.5 - 0.5 * std::cos(two_pi * i / (cfg.frame_length - 1)));
    buf_.resize(static_cast<size_t>(cfg.fft_size));
    power_.resize(static_cast<size_t>(cfg.fft_size / 2 + 1));
  }

  const FeatureConfig& config() const { return cfg_; }

  void compute(const int16_t* samples, T* out) {
    const int n = cfg_.frame_length;
    const T scale = static_cast<T>(1.0 / 32768.0);
    const T pre = static_cast<T>(cfg_.preemphasis);
    // Frame-local pre-emphasis; the first sample uses itself as its
    // predecessor so each frame depends only on its own window.
    T prev = samples[0] * scale;
    for (int i = 0; i < n; ++i) {
      T x = samples[i] * scale;
      buf_[i] = {(x - pre * prev) * window_[i], T(0)};
      prev = x;
    }
    for (int i = n; i < cfg_.fft_size; ++i) buf_[i] = {T(0), T(0)};
    fft_.transform(buf_);
    for (size_t k = 0; k < power_.size(); ++k) {
      T re = buf_[k].real(), im = buf_[k].imag();
      power_[k] = re * re + im * im;
    }
    mel_.apply(power_.data(), out);
  }

 private:
  FeatureConfig cfg_;
  FftPlan<T> fft_;
  MelBank<T> mel_;
  std::vector<T> window_;
  std::vector<std::complex<T>> buf_;
  std::vector<T> power_;
};

}  // namespace detail

// Batch frontend: whole waveform in, T x num_mels log energies out.
template <class T = double>
Matrix<T> logmel(std::span<const int16_t> pcm, const FeatureConfig& cfg = {}) {
  size_t t_max = num_frames(pcm.size(), cfg);
  Matrix<T> feats(t_max, static_cast<size_t>(cfg.num_mels));
  if (t_max == 0) return feats;
  detail::FrameComputer<T> frame(cfg);
  for (size_t t = 0; t < t_max; ++t)
    frame.compute(pcm.data() + t * static_cast<size_t>(cfg.frame_shift),
                  feats.row(t));
  return feats;
}

// Streaming frontend. Feeding the same samples in any chunking produces
// frame-for-frame the same matrix as logmel() on the concatenation.
template <class T = double>
class LogMelStream {
 public:
  explicit LogMelStream(const FeatureConfig& cfg = {})
      : frame_(cfg), cfg_(cfg) {}

  const FeatureConfig& config() const { return cfg_; }

  // Returns the newly completed frames (possibly zero rows).
  Matrix<T> push(std::span<const int16_t> chunk) {
    pending_.insert(pending_.end(), chunk.begin(), chunk.end());
    size_t n_new = num_frames(pending_.size(), cfg_);
    Matrix<T> out(n_new, static_cast<size_t>(cfg_.num_mels));
    if (n_new == 0) return out;
    for (size_t t = 0; t < n_new; ++t)
      frame_.compute(pending_.data() + t * static_cast<size_t>(cfg_.frame_shift),
                     out.row(t));
    pending_.erase(pending_.begin(),
                   pending_.begin() +
                       static_cast<std::ptrdiff_t>(n_new * cfg_.frame_shift));
    return out;
  }

 private:
  detail::FrameComputer<T> frame_;
  FeatureConfig cfg_;
  std::vector<int16_t> pending_;
};

// Optional on-disk feature dump: "WWF1", u32 T, u32 num_mels, then
// row-major 32-bit floats, little-endian.
template <class T>
void write_feature_dump(const std::string& path, const Matrix<T>& feats) {
  auto os = io::open_out(path);
  os.write("WWF1", 4);
  io::write_u32(os, static_cast<uint32_t>(feats.rows()));
  io::write_u32(os, static_cast<uint32_t>(feats.cols()));
  for (size_t i = 0; i < feats.size(); ++i)
    io::write_f32(os, static_cast<float>(feats.data()[i]));
  if (!os) throw Error(ErrorKind::kIo, "write failed: " + path);
}

template <class T = float>
Matrix<T> read_feature_dump(const std::string& path) {
  auto is = io::open_in(path);
  char magic[4];
  if (!is.read(magic, 4)) throw Error(ErrorKind::kTruncated, path);
  if (std::string_view(magic, 4) != "WWF1")
    throw Error(ErrorKind::kBadFormat, "bad feature dump magic: " + path);
  uint32_t rows = io::read_u32(is, "rows");
  uint32_t cols = io::read_u32(is, "cols");
  Matrix<T> feats(rows, cols);
  for (size_t i = 0; i < feats.size(); ++i)
    feats.data()[i] = static_cast<T>(io::read_f32(is, path.c_str()));
  return feats;
}

}  // namespace wakeword
