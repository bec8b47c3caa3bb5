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


// Goodness-of-fit helpers for the seeded uniformity checks.

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lidsap/specaugment.hpp"

namespace lidsap::testing {

/// Upper critical value of chi-square with `df` degrees of freedom for the
/// standard-normal quantile z (2.3263 for alpha = 0.01), via Wilson-Hilferty.
inline double chi_square_critical(double df, double z = 2.3263478740408408) {
  const double a = 2.0 / (9.0 * df);
  const double c = 1.0 - a + z * std::sqrt(a);
  return df * c * c * c;
}

struct ChiSquare {
  double statistic = 0.0;
  double df = 0.0;
  bool pass() const { return statistic <= chi_square_critical(df); }
};

/// Mask starts given their drawn width are uniform on {0..extent-width}.
/// Counts are pooled over widths: one cell per (width, start).
class StartUniformity {
 public:
  explicit StartUniformity(std::size_t extent, std::size_t max_width)
      : extent_(extent), counts_(max_width + 1, std::vector<double>(extent + 1, 0.0)) {}

  void add(const MaskSpan& s) { counts_.at(s.width).at(s.start) += 1.0; }

  ChiSquare result() const {
    ChiSquare r;
    for (std::size_t w = 0; w < counts_.size(); ++w) {
      const std::size_t cells = extent_ - w + 1;
      double n = 0.0;
      for (std::size_t s = 0; s < cells; ++s) n += counts_[w][s];
      if (n == 0.0) continue;
      const double expected = n / static_cast<double>(cells);
      for (std::size_t s = 0; s < cells; ++s) {
        const double d = counts_[w][s] - expected;
        r.statistic += d * d / expected;
      }
      r.df += static_cast<double>(cells - 1);
    }
    return r;
  }

 private:
  std::size_t extent_;
  std::vector<std::vector<double>> counts_;
};

}  // namespace lidsap::testing
