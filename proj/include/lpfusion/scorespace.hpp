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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpfusion/linalg.hpp"

namespace lpfusion {

inline constexpr double kStdFloor = 1e-12;
inline constexpr double kQuantileGapFloor = 1e-12;

enum class ScoreStage { kRaw, kZscored, kNormalized };

std::string_view to_string(ScoreStage stage);

/// n x d base-learner scores: row i is the score vector of sample i, column j
/// belongs to learner j.
struct ScoreMatrix {
  Matrix values;
  std::vector<std::string> learner_ids;
  ScoreStage stage = ScoreStage::kRaw;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  /// Throws InvalidInput on empty shape, id/column mismatch or non-finite entries.
  void validate() const;
};

/// Per-column z-score statistics, then per-column trim quantiles of the
/// z-scored training scores at percentiles rho and 100 - rho.
struct NormalizerState {
  Vector mean;
  Vector stddev;
  Vector lower;
  Vector upper;
  int rho = 5;

  bool has_zscore() const { return mean.size() > 0; }
  bool has_trim() const { return lower.size() > 0; }
};

/// Linear interpolation between order statistics (position (n-1) * percent / 100).
double percentile(std::span<const double> values, double percent);
double percentile_sorted(std::span<const double> sorted, double percent);

NormalizerState fit_zscore(const ScoreMatrix& train);
ScoreMatrix apply_zscore(const NormalizerState& state, const ScoreMatrix& scores);
ScoreMatrix invert_zscore(const NormalizerState& state, const ScoreMatrix& zscored);

/// Returns a copy of `state` with trim quantiles fitted on z-scored training scores.
NormalizerState fit_trim(const NormalizerState& state, const ScoreMatrix& train_zscored, int rho);

/// clamp((v - q_rho) / (q_{100-rho} - q_rho), 0, 1); a column whose quantile
/// gap is below 1e-12 maps to 0.5.
ScoreMatrix trimmed_minmax(const NormalizerState& state, const ScoreMatrix& zscored);

/// The same transform for a single fused score vector.
struct TrimRange {
  double lower = 0.0;
  double upper = 1.0;
};
TrimRange fit_trim_range(std::span<const double> values, int rho);
double apply_trim_range(const TrimRange& range, double v);

struct LabeledScores {
  ScoreMatrix scores;
  std::vector<int> labels;           // +1 normal, -1 anomalous
  std::vector<std::size_t> source;   // row of the input each output row came from
};

/// Appends negated copies of ceil(fraction * n) rows drawn without
/// replacement (label -1) after the untouched originals (label +1).
LabeledScores generate_pseudo_negatives(const ScoreMatrix& validation, double fraction,
                                        std::uint64_t seed);

}  // namespace lpfusion
