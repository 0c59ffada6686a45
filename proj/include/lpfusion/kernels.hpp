/*
 * Copyright 2026 The lpfusion Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>

#include "lpfusion/linalg.hpp"
#include "lpfusion/parallel.hpp"

namespace lpfusion {

inline constexpr std::array<double, 3> kWidthMultipliers = {0.25, 0.5, 1.0};

/// RBF kernel k(x, y) = exp(-||x - y||^2 / width).
struct KernelSpec {
  double width = 1.0;
  double width_multiplier = 1.0;

  /// width = multiplier * base, where base is the data-derived mean squared
  /// distance (see kernel_width_base).
  static KernelSpec from_grid(double multiplier, double base);
};

/// Mean of ||x_i - x_j||^2 over the n(n-1)/2 unordered distinct pairs.
/// Computed in O(n f) through the centered identity
///   sum_{i<j} ||x_i - x_j||^2 = n * sum_i ||x_i - mean||^2.
double mean_sq_dist(const Matrix& x);

/// mean_sq_dist, but a degenerate 0 (all rows identical) is replaced by 1.0
/// with a warning so the kernel width stays positive.
double kernel_width_base(const Matrix& x);

Matrix rbf_kernel_matrix(const Matrix& x, const Matrix& y, const KernelSpec& spec,
                         Exec exec = Exec::kParallel);

/// Symmetric case: computes the upper triangle once and mirrors it.
Matrix rbf_gram_matrix(const Matrix& x, const KernelSpec& spec, Exec exec = Exec::kParallel);

}  // namespace lpfusion
