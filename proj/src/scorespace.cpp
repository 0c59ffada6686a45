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


#include "lpfusion/scorespace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "lpfusion/error.hpp"

namespace lpfusion {

std::string_view to_string(ScoreStage stage) {
  switch (stage) {
    case ScoreStage::kRaw: return "raw";
    case ScoreStage::kZscored: return "zscored";
    case ScoreStage::kNormalized: return "normalized";
  }
  return "unknown";
}

void ScoreMatrix::validate() const {
  require(rows() >= 1 && cols() >= 1, ErrorKind::kInvalidInput, "score matrix is empty");
  require(learner_ids.empty() || static_cast<Index>(learner_ids.size()) == cols(), ErrorKind::kInvalidInput,
          "learner id count does not match score columns");
  require(values.allFinite(), ErrorKind::kInvalidInput, "score matrix contains non-finite entries");
}

double percentile_sorted(std::span<const double> sorted, double percent) {
  require(!sorted.empty(), ErrorKind::kInsufficientData, "percentile of an empty sample");
  require(percent >= 0.0 && percent <= 100.0, ErrorKind::kInvalidInput, "percentile outside [0, 100]");
  const double pos = static_cast<double>(sorted.size() - 1) * percent / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double percentile(std::span<const double> values, double percent) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return percentile_sorted(v, percent);
}

namespace {

void require_stage(const ScoreMatrix& s, ScoreStage stage, const char* op) {
  require(s.stage == stage, ErrorKind::kInvalidInput,
          std::string(op) + " expects " + std::string(to_string(stage)) + " scores, got " +
              std::string(to_string(s.stage)));
}

std::vector<double> column(const Matrix& m, Index j) {
  std::vector<double> c(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) c[static_cast<std::size_t>(i)] = m(i, j);
  return c;
}

}  // namespace

NormalizerState fit_zscore(const ScoreMatrix& train) {
  require_stage(train, ScoreStage::kRaw, "fit_zscore");
  require(train.rows() >= 2, ErrorKind::kInsufficientData, "z-score fit needs at least 2 rows");
  train.validate();
  NormalizerState st;
  const Index n = train.rows(), d = train.cols();
  st.mean.resize(d);
  st.stddev.resize(d);
  for (Index j = 0; j < d; ++j) {
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += train.values(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double dv = train.values(i, j) - mean;
      var += dv * dv;
    }
    st.mean[j] = mean;
    st.stddev[j] = std::max(std::sqrt(var / static_cast<double>(n)), kStdFloor);
  }
  return st;
}

ScoreMatrix apply_zscore(const NormalizerState& state, const ScoreMatrix& scores) {
  require_stage(scores, ScoreStage::kRaw, "apply_zscore");
  require(state.has_zscore(), ErrorKind::kInvalidInput, "normalizer has no z-score statistics");
  require(scores.cols() == state.mean.size(), ErrorKind::kInvalidInput, "score column count does not match normalizer");
  ScoreMatrix out{scores.values, scores.learner_ids, ScoreStage::kZscored};
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out.values(i, j) = (scores.values(i, j) - state.mean[j]) / state.stddev[j];
  return out;
}

ScoreMatrix invert_zscore(const NormalizerState& state, const ScoreMatrix& zscored) {
  require_stage(zscored, ScoreStage::kZscored, "invert_zscore");
  require(zscored.cols() == state.mean.size(), ErrorKind::kInvalidInput, "score column count does not match normalizer");
  ScoreMatrix out{zscored.values, zscored.learner_ids, ScoreStage::kRaw};
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out.values(i, j) = zscored.values(i, j) * state.stddev[j] + state.mean[j];
  return out;
}

NormalizerState fit_trim(const NormalizerState& state, const ScoreMatrix& train_zscored, int rho) {
  require_stage(train_zscored, ScoreStage::kZscored, "fit_trim");
  require(rho >= 1 && rho <= 10, ErrorKind::kInvalidInput, "rho must be in 1..10");
  require(train_zscored.rows() >= 1, ErrorKind::kInsufficientData, "trim fit needs rows");
  NormalizerState out = state;
  out.rho = rho;
  const Index d = train_zscored.cols();
  out.lower.resize(d);
  out.upper.resize(d);
  for (Index j = 0; j < d; ++j) {
    auto c = column(train_zscored.values, j);
    std::sort(c.begin(), c.end());
    out.lower[j] = percentile_sorted(c, rho);
    out.upper[j] = percentile_sorted(c, 100.0 - rho);
  }
  return out;
}

double apply_trim_range(const TrimRange& range, double v) {
  const double gap = range.upper - range.lower;
  if (gap < kQuantileGapFloor) return 0.5;
  return std::clamp((v - range.lower) / gap, 0.0, 1.0);
}

TrimRange fit_trim_range(std::span<const double> values, int rho) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return TrimRange{percentile_sorted(v, rho), percentile_sorted(v, 100.0 - rho)};
}

ScoreMatrix trimmed_minmax(const NormalizerState& state, const ScoreMatrix& zscored) {
  require_stage(zscored, ScoreStage::kZscored, "trimmed_minmax");
  require(state.has_trim(), ErrorKind::kInvalidInput, "normalizer has no trim quantiles");
  require(zscored.cols() == state.lower.size(), ErrorKind::kInvalidInput, "score column count does not match normalizer");
  ScoreMatrix out{zscored.values, zscored.learner_ids, ScoreStage::kNormalized};
  for (Index j = 0; j < out.cols(); ++j) {
    const TrimRange r{state.lower[j], state.upper[j]};
    for (Index i = 0; i < out.rows(); ++i) out.values(i, j) = apply_trim_range(r, zscored.values(i, j));
  }
  return out;
}

LabeledScores generate_pseudo_negatives(const ScoreMatrix& validation, double fraction, std::uint64_t seed) {
  require_stage(validation, ScoreStage::kZscored, "generate_pseudo_negatives");
  require(validation.rows() >= 1, ErrorKind::kInsufficientData, "validation matrix is empty");
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidInput, "pseudo-negative fraction must be in (0, 1]");
  const auto n = static_cast<std::size_t>(validation.rows());
  const auto m = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(chosen.begin(), chosen.end());

  LabeledScores out;
  out.scores.learner_ids = validation.learner_ids;
  out.scores.stage = ScoreStage::kZscored;
  out.scores.values.resize(static_cast<Index>(n + m), validation.cols());
  out.scores.values.topRows(static_cast<Index>(n)) = validation.values;
  out.labels.assign(n, 1);
  out.source.resize(n);
  std::iota(out.source.begin(), out.source.end(), 0);
  for (std::size_t r = 0; r < m; ++r) {
    out.scores.values.row(static_cast<Index>(n + r)) = -validation.values.row(static_cast<Index>(chosen[r]));
    out.labels.push_back(-1);
    out.source.push_back(chosen[r]);
  }
  return out;
}

}  // namespace lpfusion
