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


#include <atomic>
#include <iostream>
#include <mutex>

#include <omp.h>

#include "lpfusion/error.hpp"
#include "lpfusion/features.hpp"
#include "lpfusion/log.hpp"
#include "lpfusion/parallel.hpp"

namespace lpfusion {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kInvalidInput: return "InvalidInput";
    case ErrorKind::kNumericalFailure: return "NumericalFailure";
    case ErrorKind::kInfeasiblePoint: return "InfeasiblePoint";
    case ErrorKind::kUndefinedMetric: return "UndefinedMetric";
    case ErrorKind::kIoError: return "IoError";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kRunFailed: return "RunFailed";
  }
  return "Unknown";
}

int max_threads() { return omp_get_max_threads(); }

MinMaxScaler MinMaxScaler::fit(const Matrix& x) {
  require(x.rows() > 0 && x.cols() > 0, ErrorKind::kInsufficientData, "cannot fit a scaler on an empty matrix");
  MinMaxScaler s;
  s.lower = x.colwise().minCoeff().transpose();
  s.range = x.colwise().maxCoeff().transpose() - s.lower;
  for (Index j = 0; j < s.range.size(); ++j)
    if (!(s.range[j] > 0.0)) s.range[j] = 1.0;
  return s;
}

Matrix MinMaxScaler::transform(const Matrix& x) const {
  require(fitted(), ErrorKind::kInvalidInput, "scaler is not fitted");
  require(x.cols() == lower.size(), ErrorKind::kInvalidInput,
          "scaler expects " + std::to_string(lower.size()) + " columns, got " + std::to_string(x.cols()));
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - lower[j]) / range[j];
  return out;
}

namespace log {
namespace {

std::atomic<int> g_level{static_cast<int>(Level::kWarning)};
std::atomic<long> g_warnings{0};
std::mutex g_mutex;

const char* tag(Level l) {
  switch (l) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarning: return "warning";
    case Level::kError: return "error";
    default: return "";
  }
}

}  // namespace

void set_level(Level l) { g_level.store(static_cast<int>(l)); }
Level level() { return static_cast<Level>(g_level.load()); }

void write(Level l, std::string_view message) {
  if (l == Level::kWarning) g_warnings.fetch_add(1);
  if (static_cast<int>(l) < g_level.load() || l == Level::kOff) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::cerr << "[lpfusion " << tag(l) << "] " << message << '\n';
}

long warning_count() { return g_warnings.load(); }
void reset_warning_count() { g_warnings.store(0); }

}  // namespace log
}  // namespace lpfusion
