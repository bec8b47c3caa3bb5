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

// RIFF/WAVE reader for 16-bit PCM, plus a writer used by tools and tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lidsap {

struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = 0;
  std::string id;

  double duration() const {
    return sample_rate ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

class WavError : public std::runtime_error {
 public:
  enum class Kind { kMalformedHeader, kUnsupportedCodec, kEmptyPayload, kIo };

  WavError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {
inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
}  // namespace detail

/// Decodes 16-bit PCM WAV. Multichannel audio is averaged to mono and samples
/// are scaled by 1/32768.
inline AudioClip decode_wav(std::span<const std::uint8_t> bytes, std::string id = {}) {
  using detail::read_u16;
  using detail::read_u32;
  using Kind = WavError::Kind;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(Kind::kMalformedHeader, "not a RIFF/WAVE container");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* payload = nullptr;
  std::size_t payload_size = 0;
  bool have_data = false;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) {
        throw WavError(Kind::kMalformedHeader, "truncated fmt chunk");
      }
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      bits = read_u16(f + 14);
      if (format == 0xFFFE) {
        // WAVE_FORMAT_EXTENSIBLE: the sub-format GUID starts with the codec tag.
        if (size < 40) throw WavError(Kind::kMalformedHeader, "truncated extensible fmt chunk");
        format = read_u16(f + 24);
      }
      if (format != 1) {
        throw WavError(Kind::kUnsupportedCodec,
                       "unsupported WAV codec tag " + std::to_string(format) + " (PCM only)");
      }
      if (bits != 16) {
        throw WavError(Kind::kUnsupportedCodec,
                       "unsupported sample width " + std::to_string(bits) + " bits (16 only)");
      }
      if (channels == 0 || rate == 0) {
        throw WavError(Kind::kMalformedHeader, "zero channels or sample rate");
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw WavError(Kind::kMalformedHeader, "data chunk before fmt chunk");
      payload = bytes.data() + body;
      // Streaming writers sometimes leave the size field at 0 or oversized.
      payload_size = std::min<std::size_t>(size, bytes.size() - body);
      have_data = true;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw WavError(Kind::kMalformedHeader, "missing fmt chunk");
  if (!have_data) throw WavError(Kind::kMalformedHeader, "missing data chunk");
  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = payload_size / frame_bytes;
  if (frames == 0) throw WavError(Kind::kEmptyPayload, "WAV data chunk holds no samples");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.id = std::move(id);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(read_u16(payload + i * frame_bytes + 2 * c));
      acc += raw / 32768.0;
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavError::Kind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// `id` defaults to the path.
inline AudioClip load_wav(const std::string& path, std::string id = {}) {
  const auto bytes = read_file_bytes(path);
  return decode_wav(bytes, id.empty() ? path : std::move(id));
}

/// Encodes interleaved 16-bit PCM. Samples are clamped to [-1, 1).
inline std::vector<std::uint8_t> encode_wav(std::span<const float> interleaved,
                                            std::uint32_t sample_rate,
                                            std::uint16_t channels = 1) {
  using detail::put_u16;
  using detail::put_u32;
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * 2);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, sample_rate);
  put_u32(out, sample_rate * channels * 2);
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float s : interleaved) {
    const double v = std::clamp(static_cast<double>(s), -1.0, 1.0) * 32768.0;
    const auto q = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

inline void write_wav(const std::string& path, std::span<const float> samples,
                      std::uint32_t sample_rate) {
  const auto bytes = encode_wav(samples, sample_rate);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError(WavError::Kind::kIo, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace lidsap
