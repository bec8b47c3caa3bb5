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

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace lidsap {

inline bool is_power_of_two(std::size_t n) { return n && !(n & (n - 1)); }

/// In-place iterative radix-2 decimation-in-time FFT (forward, unnormalized).
template <typename T>
void fft_inplace(std::span<std::complex<T>> a) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles are evaluated directly rather than by recurrence to keep
        // the error flat across large transforms.
        const std::complex<T> w(static_cast<T>(std::cos(ang * k)), static_cast<T>(std::sin(ang * k)));
        const std::complex<T> u = a[i + k];
        const std::complex<T> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

/// |X_k|^2 for k = 0..n/2 of a real signal zero-padded to n.
template <typename T>
std::vector<T> power_spectrum(std::span<const T> frame, std::size_t n) {
  if (frame.size() > n) throw std::invalid_argument("frame longer than fft size");
  std::vector<std::complex<T>> buf(n);
  for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
  fft_inplace<T>(buf);
  std::vector<T> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::norm(buf[k]);
  return out;
}

}  // namespace lidsap
