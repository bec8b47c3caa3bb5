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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace lidsap {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates where the one-sided slopes disagree, i.e. a ReLU kink lies
  // within epsilon. They are excluded from max_rel_error.
  std::size_t skipped_kinks = 0;

  void merge(const GradCheckResult& o) {
    max_rel_error = std::max(max_rel_error, o.max_rel_error);
    checked += o.checked;
    skipped_kinks += o.skipped_kinks;
  }
};

struct GradCheckOptions {
  // Small enough that a perturbation rarely carries a ReLU input across zero.
  double epsilon = 1e-6;
  // Denominator floor for the relative error, so exactly-zero gradients do
  // not divide roundoff by zero.
  double abs_floor = 1e-6;
  // One-sided slopes further apart than this (relative) mark a kink.
  double kink_tolerance = 1e-2;
};

/// Error metric shared by every check: |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic` against central differences of `loss` taken by
/// perturbing each entry of `point` in place (restored afterwards).
template <typename LossFn>
GradCheckResult finite_diff_check(LossFn&& loss, std::span<double> point,
                                  std::span<const double> analytic,
                                  const GradCheckOptions& opt = {}) {
  if (point.size() != analytic.size()) {
    throw std::invalid_argument("finite_diff_check: point/gradient length mismatch");
  }
  GradCheckResult r;
  const double eps = opt.epsilon;
  const double f0 = loss();
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + eps;
    const double fp = loss();
    point[i] = saved - eps;
    const double fm = loss();
    point[i] = saved;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double err = relative_error(analytic[i], numeric, opt.abs_floor);
    if (err > 1e-6) {
      const double fwd = (fp - f0) / eps;
      const double bwd = (f0 - fm) / eps;
      const double scale = std::max({std::abs(fwd), std::abs(bwd), 1e-3});
      if (std::abs(fwd - bwd) / scale > opt.kink_tolerance) {
        ++r.skipped_kinks;
        continue;
      }
    }
    r.max_rel_error = std::max(r.max_rel_error, err);
    ++r.checked;
  }
  return r;
}

}  // namespace lidsap
