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


#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "lidsap/features.hpp"
#include "lidsap/fft.hpp"
#include "lidsap/random.hpp"
#include "lidsap/wav.hpp"

namespace lidsap {
namespace {

std::vector<std::uint8_t> pcm16(std::vector<std::int16_t> samples, std::uint16_t channels = 1,
                                std::uint32_t rate = 16000) {
  std::vector<float> f;
  for (auto s : samples) f.push_back(static_cast<float>(s / 32768.0));
  return encode_wav(f, rate, channels);
}

WavError::Kind decode_error_kind(std::span<const std::uint8_t> bytes) {
  try {
    decode_wav(bytes);
  } catch (const WavError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode_wav accepted malformed input";
  return WavError::Kind::kIo;
}

TEST(Wav, SampleScaling) {
  const auto clip = decode_wav(pcm16({0, -32768, 16384}));
  ASSERT_EQ(clip.samples.size(), 3u);
  EXPECT_EQ(clip.samples[0], 0.0f);
  EXPECT_EQ(clip.samples[1], -1.0f);
  EXPECT_EQ(clip.samples[2], 0.5f);
  EXPECT_EQ(clip.sample_rate, 16000u);
}

TEST(Wav, StereoAveragesToMono) {
  const auto clip = decode_wav(pcm16({1000, -1000, 200, 400}, 2));
  ASSERT_EQ(clip.samples.size(), 2u);
  EXPECT_EQ(clip.samples[0], 0.0f);
  EXPECT_NEAR(clip.samples[1], 300.0 / 32768.0, 1e-7);
}

TEST(Wav, DistinctErrorKinds) {
  std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e'};
  EXPECT_EQ(decode_error_kind(junk), WavError::Kind::kMalformedHeader);

  auto float_codec = pcm16({1, 2});
  float_codec[20] = 3;  // IEEE float format tag
  EXPECT_EQ(decode_error_kind(float_codec), WavError::Kind::kUnsupportedCodec);

  const auto empty = encode_wav(std::vector<float>{}, 16000);
  EXPECT_EQ(decode_error_kind(empty), WavError::Kind::kEmptyPayload);

  EXPECT_THROW(load_wav("/nonexistent/clip.wav"), WavError);
}

TEST(Mel, HtkFormula) {
  EXPECT_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 781.1728, 1e-3);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

TEST(Mel, FilterbankShapeCoverageAndOrder) {
  const FeatureConfig cfg;
  const auto fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.dim(0), 40u);
  ASSERT_EQ(fb.dim(1), 257u);
  for (std::size_t m = 0; m < 40; ++m) {
    double sum = 0.0;
    for (std::size_t k = 0; k < 257; ++k) {
      EXPECT_GE(fb.at(m, k), 0.0);
      sum += fb.at(m, k);
    }
    EXPECT_GT(sum, 0.0) << "row " << m;
  }
  const auto centers = mel_center_frequencies(cfg);
  for (std::size_t m = 1; m < centers.size(); ++m) EXPECT_GT(centers[m], centers[m - 1]);
  EXPECT_GT(centers.front(), cfg.f_min);
  EXPECT_LT(centers.back(), cfg.f_max);
}

TEST(Mel, TooManyFiltersIsReported) {
  FeatureConfig cfg;
  cfg.n_mels = 200;
  EXPECT_THROW(mel_filterbank(cfg), FeatureError);
}

TEST(Fft, MatchesDirectDftOracle) {
  Rng rng(21);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (std::size_t n : {1u, 2u, 4u, 8u, 16u, 32u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::complex<float>> x(n);
      for (auto& v : x) v = {u(rng), u(rng)};
      std::vector<std::complex<float>> fast = x;
      fft_inplace<float>(fast);
      for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double ang = -2.0 * std::numbers::pi * static_cast<double>(j * k % n) / n;
          acc += std::complex<double>(x[j]) * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        EXPECT_LE(std::abs(std::complex<double>(fast[k]) - acc), 1e-4) << "n=" << n << " k=" << k;
      }
    }
  }
  std::vector<std::complex<float>> bad(12);
  EXPECT_THROW(fft_inplace<float>(bad), std::invalid_argument);
}

TEST(Fft, Parseval) {
  Rng rng(22);
  std::normal_distribution<double> d(0.0, 1.0);
  for (std::size_t n : {16u, 64u, 512u}) {
    std::vector<std::complex<double>> x(n);
    double time_energy = 0.0;
    for (auto& v : x) {
      v = {d(rng), d(rng)};
      time_energy += std::norm(v);
    }
    fft_inplace<double>(x);
    double freq_energy = 0.0;
    for (const auto& v : x) freq_energy += std::norm(v);
    EXPECT_NEAR(freq_energy / n, time_energy, 1e-4 * time_energy);
  }
}

TEST(Mfsc, FrameCountForOneSecond) {
  const FeatureConfig cfg;
  const AudioClip clip{std::vector<float>(16000, 0.0f), 16000, "one_second"};
  const auto fm = compute_mfsc(clip, cfg);
  EXPECT_EQ(fm.frames(), 98u);
  EXPECT_EQ(fm.bins(), 40u);
  EXPECT_EQ(fm.id, "one_second");
}

TEST(Mfsc, SilenceGivesLogFloor) {
  const FeatureConfig cfg;
  const AudioClip clip{std::vector<float>(16000, 0.0f), 16000, "z"};
  const float want = static_cast<float>(std::log(cfg.log_floor));
  const FeatureMap fm = compute_mfsc(clip, cfg);
  for (float v : fm.data.storage()) EXPECT_EQ(v, want);
}

TEST(Mfsc, ShortClipIsOneZeroPaddedFrame) {
  const FeatureConfig cfg;
  const AudioClip clip{std::vector<float>(300, 0.1f), 16000, "short"};
  EXPECT_EQ(compute_mfsc(clip, cfg).frames(), 1u);
  const AudioClip tiny{std::vector<float>(100, 0.1f), 16000, "tiny"};
  EXPECT_THROW(compute_mfsc(tiny, cfg), FeatureError);
}

TEST(Mfsc, BinAlignedSinePeaksInCoveringFilter) {
  FeatureConfig cfg;
  cfg.preemphasis = 0.0;
  const double bin_hz = 16000.0 / 512.0;
  const double f = 64 * bin_hz;  // 2000 Hz
  std::vector<float> s(16000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<float>(0.5 * std::sin(2 * std::numbers::pi * f * i / 16000.0));
  const auto fm = compute_mfsc({s, 16000, "sine"}, cfg);
  const auto fb = mel_filterbank(cfg);
  std::size_t best_filter = 0;
  for (std::size_t m = 1; m < 40; ++m) {
    if (fb.at(m, 64) > fb.at(best_filter, 64)) best_filter = m;
  }
  std::size_t first_peak = 0;
  for (std::size_t t = 0; t < fm.frames(); ++t) {
    std::size_t peak = 0;
    for (std::size_t m = 1; m < 40; ++m) {
      if (fm.data.at(t, m) > fm.data.at(t, peak)) peak = m;
    }
    if (t == 0) first_peak = peak;
    EXPECT_EQ(peak, first_peak) << "frame " << t;
    EXPECT_GT(fb.at(peak, 64), 0.0);
  }
  EXPECT_EQ(first_peak, best_filter);
}

TEST(Mfsc, MatchesDirectDftPipeline) {
  FeatureConfig cfg;
  Rng rng(23);
  std::uniform_real_distribution<float> u(-0.5f, 0.5f);
  std::vector<float> s(800);
  for (auto& v : s) v = u(rng);
  const auto fm = compute_mfsc({s, 16000, "r"}, cfg);
  ASSERT_EQ(fm.frames(), 3u);
  const auto fb = mel_filterbank(cfg);
  // Frame 2 (the last full frame) recomputed with an O(N^2) DFT.
  std::vector<double> sig(s.begin(), s.end());
  for (std::size_t i = sig.size() - 1; i > 0; --i) sig[i] -= 0.97 * sig[i - 1];
  const std::size_t win = 400, start = 2 * 160;
  std::vector<double> power(257);
  for (std::size_t k = 0; k < 257; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < win; ++j) {
      const double w = 0.54 - 0.46 * std::cos(2 * std::numbers::pi * j / (win - 1));
      const double x = start + j < sig.size() ? sig[start + j] * w : 0.0;
      acc += x * std::polar(1.0, -2 * std::numbers::pi * static_cast<double>(j * k) / 512.0);
    }
    power[k] = std::norm(acc);
  }
  for (std::size_t m = 0; m < 40; ++m) {
    double e = 0.0;
    for (std::size_t k = 0; k < 257; ++k) e += fb.at(m, k) * power[k];
    EXPECT_NEAR(fm.data.at(2, m), std::log(e + 1e-10), 1e-4 * (1 + std::abs(std::log(e + 1e-10))));
  }
}

TEST(Mfsc, DeterministicFromIdenticalBytes) {
  Rng rng(24);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> s(4000);
  for (auto& v : s) v = u(rng);
  const auto bytes = encode_wav(s, 16000);
  const FeatureConfig cfg;
  const auto a = compute_mfsc(decode_wav(bytes), cfg);
  const auto b = compute_mfsc(decode_wav(bytes), cfg);
  EXPECT_EQ(a.data, b.data);
  EXPECT_TRUE(a.data.all_finite());
}

TEST(Mfsc, LongClipsAreTruncated) {
  FeatureConfig cfg;
  cfg.max_duration = 1.0;
  const auto fm = compute_mfsc({std::vector<float>(48000, 0.0f), 16000, "long"}, cfg);
  EXPECT_EQ(fm.frames(), 98u);
}

TEST(Mfsc, SampleRateMismatchIsAnError) {
  EXPECT_THROW(compute_mfsc({std::vector<float>(8000, 0.0f), 8000, "nb"}, FeatureConfig{}), FeatureError);
}

TEST(Mfsc, DumpRoundTrip) {
  Rng rng(25);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> s(3000);
  for (auto& v : s) v = u(rng);
  const auto fm = compute_mfsc({s, 16000, "d"}, FeatureConfig{});
  const std::string text = format_feature_dump(fm);
  EXPECT_EQ(text.rfind("MFSC v1 " + std::to_string(fm.frames()) + " 40\n", 0), 0u);
  EXPECT_EQ(parse_feature_dump(text).data, fm.data);
  EXPECT_THROW(parse_feature_dump("MFSC v2 1 1\n0"), FeatureError);
}

TEST(FeatureConfig, ValidationRejectsBadValues) {
  FeatureConfig cfg;
  cfg.fft_size = 500;
  EXPECT_THROW(cfg.validate(), FeatureError);
  cfg = {};
  cfg.f_max = 9000.0;
  EXPECT_THROW(cfg.validate(), FeatureError);
  cfg = {};
  cfg.fft_size = 256;  // shorter than the 400-sample window
  EXPECT_THROW(cfg.validate(), FeatureError);
}

}  // namespace
}  // namespace lidsap
