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


#include "lpfusion/kernels.hpp"

#include <cmath>

#include "lpfusion/error.hpp"
#include "lpfusion/log.hpp"

namespace lpfusion {

KernelSpec KernelSpec::from_grid(double multiplier, double base) {
  require(multiplier > 0.0 && base > 0.0 && std::isfinite(multiplier * base), ErrorKind::kInvalidInput,
          "kernel width must be positive and finite");
  return KernelSpec{multiplier * base, multiplier};
}

double mean_sq_dist(const Matrix& x) {
  const Index n = x.rows();
  require(n >= 2, ErrorKind::kInsufficientData, "mean squared distance needs at least 2 rows");
  require(x.allFinite(), ErrorKind::kInvalidInput, "features contain non-finite values");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) acc += (x.row(i) - mean).squaredNorm();
  // n * acc summed over n(n-1)/2 pairs
  return 2.0 * acc / static_cast<double>(n - 1);
}

double kernel_width_base(const Matrix& x) {
  const double m = mean_sq_dist(x);
  if (!(m > 0.0)) {
    log::warning("all training rows coincide; using kernel width base 1.0");
    return 1.0;
  }
  return m;
}

namespace {

void check_spec(const KernelSpec& spec) {
  require(spec.width > 0.0 && std::isfinite(spec.width), ErrorKind::kInvalidInput, "kernel width must be positive");
}

}  // namespace

Matrix rbf_kernel_matrix(const Matrix& x, const Matrix& y, const KernelSpec& spec, Exec exec) {
  check_spec(spec);
  require(x.cols() == y.cols(), ErrorKind::kInvalidInput, "kernel inputs differ in feature dimension");
  const Index n = x.rows(), m = y.rows();
  const double inv = 1.0 / spec.width;
  Matrix k(n, m);
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) k(i, j) = std::exp(-squared_distance(row_span(x, i), row_span(y, j)) * inv);
  } else {
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < m; ++j) k(i, j) = std::exp(-squared_distance(row_span(x, i), row_span(y, j)) * inv);
  }
  return k;
}

Matrix rbf_gram_matrix(const Matrix& x, const KernelSpec& spec, Exec exec) {
  check_spec(spec);
  const Index n = x.rows();
  const double inv = 1.0 / spec.width;
  Matrix k(n, n);
  auto fill_row = [&](Index i) {
    k(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) k(i, j) = std::exp(-squared_distance(row_span(x, i), row_span(x, j)) * inv);
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic, 16)
    for (Index i = 0; i < n; ++i) fill_row(i);
  } else {
    for (Index i = 0; i < n; ++i) fill_row(i);
  }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < i; ++j) k(i, j) = k(j, i);
  return k;
}

}  // namespace lpfusion
