// Copyright 2026 The lidsap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Log mel-filterbank (MFSC) front end:
//   pre-emphasis -> framing -> Hamming -> |DFT|^2 -> mel triangles -> log

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lidsap/fft.hpp"
#include "lidsap/tensor.hpp"
#include "lidsap/wav.hpp"

namespace lidsap {

class FeatureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureConfig {
  std::uint32_t sample_rate = 16000;
  double frame_length = 0.025;  // seconds
  double frame_hop = 0.010;     // seconds
  std::size_t fft_size = 512;
  std::size_t n_mels = 40;
  double f_min = 20.0;
  double f_max = 7600.0;
  double preemphasis = 0.97;
  double log_floor = 1e-10;
  double max_duration = 20.0;  // seconds; longer clips are truncated

  std::size_t window_samples() const {
    return static_cast<std::size_t>(std::lround(frame_length * sample_rate));
  }
  std::size_t hop_samples() const {
    return static_cast<std::size_t>(std::lround(frame_hop * sample_rate));
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw FeatureError("invalid feature config: " + m); };
    if (sample_rate == 0) fail("sample_rate must be positive");
    if (!(frame_length > 0) || !(frame_hop > 0)) fail("frame_length and frame_hop must be positive");
    if (window_samples() == 0 || hop_samples() == 0) fail("window and hop must span at least one sample");
    if (!is_power_of_two(fft_size)) fail("fft_size must be a power of two");
    if (fft_size < window_samples()) fail("fft_size smaller than the analysis window");
    if (n_mels < 1) fail("n_mels must be >= 1");
    if (!(f_min > 0) || !(f_min < f_max) || f_max > sample_rate / 2.0) {
      fail("need 0 < f_min < f_max <= sample_rate/2");
    }
    if (!(preemphasis >= 0.0 && preemphasis < 1.0)) fail("preemphasis must be in [0, 1)");
    if (!(log_floor > 0)) fail("log_floor must be positive");
    if (!(max_duration > 0)) fail("max_duration must be positive");
  }
};

/// T x F log-mel matrix for one utterance (row = frame).
struct FeatureMap {
  Tensor<float> data;
  double frame_hop = 0.0;
  std::string id;

  std::size_t frames() const { return data.dim(0); }
  std::size_t bins() const { return data.dim(1); }
};

/// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequency (Hz) of each mel filter.
inline std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> centers(cfg.n_mels);
  const double step = (hi - lo) / static_cast<double>(cfg.n_mels + 1);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) centers[m] = mel_to_hz(lo + step * (m + 1));
  return centers;
}

/// n_mels x (fft_size/2 + 1) triangular filters on linear FFT bins with
/// corners equally spaced in mel between f_min and f_max.
inline Tensor<double> mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  const double step = (hi - lo) / static_cast<double>(cfg.n_mels + 1);
  std::vector<double> corners(cfg.n_mels + 2);
  for (std::size_t i = 0; i < corners.size(); ++i) corners[i] = mel_to_hz(lo + step * i);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size;
  Tensor<double> fb({cfg.n_mels, bins});
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = corners[m], center = corners[m + 1], right = corners[m + 2];
    double row_sum = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = bin_hz * k;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb.at(m, k) = w;
      row_sum += w;
    }
    if (!(row_sum > 0.0)) {
      throw FeatureError("mel filter " + std::to_string(m) + " covers no FFT bin; n_mels=" +
                         std::to_string(cfg.n_mels) + " is too large for fft_size=" +
                         std::to_string(cfg.fft_size));
    }
  }
  return fb;
}

/// Symmetric Hamming window of length n.
inline std::vector<double> hamming_window(std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (n == 1) return w;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n - 1));
  }
  return w;
}

/// Frames produced for `len` samples: 1 + floor((len - win)/hop) when the
/// clip covers a window, else a single zero-padded frame.
inline std::size_t frame_count(std::size_t len, std::size_t win, std::size_t hop) {
  if (len < win) return 1;
  return 1 + (len - win) / hop;
}

/// Precomputed front end; reuse across utterances.
class MfscExtractor {
 public:
  explicit MfscExtractor(FeatureConfig cfg)
      : cfg_(std::move(cfg)), filters_(mel_filterbank(cfg_)), window_(hamming_window(cfg_.window_samples())) {}

  const FeatureConfig& config() const { return cfg_; }
  const Tensor<double>& filters() const { return filters_; }

  FeatureMap operator()(const AudioClip& clip) const {
    if (clip.sample_rate != cfg_.sample_rate) {
      throw FeatureError("sample rate mismatch: clip " + std::to_string(clip.sample_rate) +
                         " Hz, config " + std::to_string(cfg_.sample_rate) + " Hz (no resampling)");
    }
    const std::size_t win = cfg_.window_samples(), hop = cfg_.hop_samples();
    const auto max_len = static_cast<std::size_t>(std::floor(cfg_.max_duration * cfg_.sample_rate));
    const std::size_t len = std::min(clip.samples.size(), max_len);
    if (len < hop) {
      throw FeatureError("clip '" + clip.id + "' is shorter than one hop (" + std::to_string(len) +
                         " < " + std::to_string(hop) + " samples)");
    }

    std::vector<double> signal(len);
    for (std::size_t i = 0; i < len; ++i) {
      const double x = clip.samples[i];
      if (!std::isfinite(x)) throw FeatureError("non-finite sample in clip '" + clip.id + "'");
      signal[i] = x;
    }
    if (cfg_.preemphasis > 0.0) {
      for (std::size_t i = len - 1; i > 0; --i) signal[i] -= cfg_.preemphasis * signal[i - 1];
    }

    const std::size_t frames = frame_count(len, win, hop);
    const std::size_t bins = cfg_.fft_size / 2 + 1;
    FeatureMap fm{Tensor<float>({frames, cfg_.n_mels}), cfg_.frame_hop, clip.id};
    std::vector<double> frame(win);
    for (std::size_t t = 0; t < frames; ++t) {
      const std::size_t start = t * hop;
      for (std::size_t i = 0; i < win; ++i) {
        const std::size_t j = start + i;
        frame[i] = j < len ? signal[j] * window_[i] : 0.0;
      }
      const auto power = power_spectrum<double>(frame, cfg_.fft_size);
      for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
        double e = 0.0;
        const double* row = filters_.data().data() + m * bins;
        for (std::size_t k = 0; k < bins; ++k) e += row[k] * power[k];
        fm.data.at(t, m) = static_cast<float>(std::log(e + cfg_.log_floor));
      }
    }
    return fm;
  }

 private:
  FeatureConfig cfg_;
  Tensor<double> filters_;
  std::vector<double> window_;
};

inline FeatureMap compute_mfsc(const AudioClip& clip, const FeatureConfig& cfg) {
  return MfscExtractor(cfg)(clip);
}

// Text dump: "MFSC v1 <T> <F>" then T lines of F floats.

inline std::string format_feature_dump(const FeatureMap& fm) {
  std::ostringstream os;
  os << "MFSC v1 " << fm.frames() << ' ' << fm.bins() << '\n';
  os << std::setprecision(std::numeric_limits<float>::max_digits10);
  for (std::size_t t = 0; t < fm.frames(); ++t) {
    for (std::size_t f = 0; f < fm.bins(); ++f) {
      if (f) os << ' ';
      os << fm.data.at(t, f);
    }
    os << '\n';
  }
  return os.str();
}

inline FeatureMap parse_feature_dump(const std::string& text, std::string id = {}) {
  std::istringstream is(text);
  std::string magic, version;
  std::size_t frames = 0, bins = 0;
  if (!(is >> magic >> version >> frames >> bins) || magic != "MFSC" || version != "v1" ||
      frames == 0 || bins == 0) {
    throw FeatureError("bad MFSC dump header");
  }
  FeatureMap fm{Tensor<float>({frames, bins}), 0.0, std::move(id)};
  for (std::size_t i = 0; i < frames * bins; ++i) {
    if (!(is >> fm.data[i])) throw FeatureError("truncated MFSC dump");
  }
  return fm;
}

}  // namespace lidsap
