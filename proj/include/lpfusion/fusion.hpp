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
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpfusion/base_learners.hpp"
#include "lpfusion/features.hpp"
#include "lpfusion/linalg.hpp"
#include "lpfusion/parallel.hpp"
#include "lpfusion/scorespace.hpp"

namespace lpfusion {

inline constexpr double kMinP = 1.0 + 1e-6;
inline constexpr double kMaxP = 100.0;
inline constexpr double kFeasibilitySlack = 1e-9;
inline constexpr std::array<double, 9> kPGrid = {32.0 / 31.0, 16.0 / 15.0, 8.0 / 7.0, 4.0 / 3.0, 2.0,
                                                 4.0,         8.0,         10.0,      100.0};

/// sum_j |w_j|^p
double lp_norm_pow(std::span<const double> w, double p);
double lp_norm(std::span<const double> w, double p);

/// Per-sample fusion weights. Row i is the weight vector anchored at row i of
/// anchor_features and constrained to the unit l_{p_i} ball. A shared
/// (locality-free) set has a single row and no anchors.
struct LocalWeightSet {
  Matrix weights;
  Vector local_p;
  Matrix anchor_features;

  bool shared() const { return weights.rows() == 1 && anchor_features.rows() == 0; }
  Index dims() const { return weights.cols(); }

  /// Largest ||w_i||_{p_i} over all rows.
  double max_norm() const;
  /// Throws InvalidInput on shape mismatch, p outside [1+1e-6, 100] or a row
  /// norm above 1 + 1e-9.
  void validate() const;
};

struct OptimizerConfig {
  double p_base = 2.0;
  double mu0 = 10.0;
  double beta = 0.5;
  double learning_rate = 0.01;
  int max_epochs = 200;
  double tolerance = 1e-4;
  int locality_k = 10;
  bool locality_enabled = true;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Locality

/// p_i = clamp(1 + (p_base - 1) / max(r, 1e-6), 1 + 1e-6, 100), where r is a
/// sample's k-NN dispersion relative to the training median.
double locality_p_from_ratio(double ratio, double p_base);

/// Mean Euclidean distance from each training row to its k nearest other
/// training rows, plus the median of those dispersions.
class LocalityIndex {
 public:
  LocalityIndex(const Matrix& x_train, int k, Exec exec = Exec::kParallel);

  int k() const { return k_; }
  double median_dispersion() const { return median_; }
  const Vector& training_dispersion() const { return dispersion_; }

  /// Dispersion of an arbitrary point against the training rows.
  double dispersion(std::span<const double> x) const;

  double p_for_dispersion(double dispersion, double p_base) const;
  Vector training_p(double p_base) const;

 private:
  const Matrix* x_train_;
  int k_;
  Vector dispersion_;
  double median_ = 0.0;
};

double locality_p(std::span<const double> x, const Matrix& x_train, double p_base, int k);

// ---------------------------------------------------------------------------
// Objective pieces

struct HingeTerm {
  double loss = 0.0;
  Vector grad;
};

/// loss = max(0, 1 - y <s, w>); grad = -y s while the loss is strictly positive.
HingeTerm hinge_loss_and_grad(std::span<const double> s, int y, std::span<const double> w);

/// -mu ln(1 - ||w||_p^p); +inf outside the open ball.
double barrier_value(std::span<const double> w, double p, double mu);

/// Gradient of barrier_value: mu p sign(w_j)|w_j|^{p-1} / (1 - ||w||_p^p).
/// Throws InfeasiblePoint when ||w||_p >= 1.
Vector barrier_grad(std::span<const double> w, double p, double mu);

/// Radial scaling onto the unit l_p ball; interior points come back unchanged.
Vector project_lp_ball(std::span<const double> w, double p);

double total_hinge_loss(const Matrix& scores, std::span<const int> labels, std::span<const double> w);
double total_hinge_loss(const Matrix& scores, std::span<const int> labels, const Matrix& row_weights);

// ---------------------------------------------------------------------------
// Optimizers

struct EpochReport {
  int epoch = 0;
  double mu = 0.0;
  double objective = 0.0;
  double hinge = 0.0;
  const LocalWeightSet* weights = nullptr;
};
using EpochObserver = std::function<void(const EpochReport&)>;

struct OptimizationResult {
  LocalWeightSet weights;
  double objective = 0.0;
  double hinge = 0.0;
  int epochs = 0;
  bool converged = false;
};

/// Locally adaptive barrier descent. With locality enabled every sample owns a
/// weight row and its own p_i; rows are independent within an epoch and are
/// updated in parallel under Exec::kParallel. With locality disabled one shared
/// row takes, per epoch, one backtracked step along the summed per-sample
/// gradient.
OptimizationResult optimize_interior_point(const ScoreMatrix& scores, const Matrix& features,
                                           std::span<const int> labels,
                                           const OptimizerConfig& config,
                                           Exec exec = Exec::kParallel,
                                           const EpochObserver& observer = {});

struct FrankWolfeResult {
  Vector weights;
  double objective = 0.0;
  double gap = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Linear minimization oracle over the unit l_p ball: the vertex minimizing <g, v>.
Vector lp_ball_vertex(std::span<const double> gradient, double p);

/// Global (locality-free) weights by Frank-Wolfe on the summed hinge loss.
/// Returns the best iterate; stops on duality gap <= tolerance.
FrankWolfeResult optimize_frank_wolfe(const ScoreMatrix& scores, std::span<const int> labels, double p,
                                      const OptimizerConfig& config,
                                      const std::function<void(int, std::span<const double>)>& observer = {});

/// Process-wide tallies from the assertion-instrumented build: weight rows
/// checked against their l_p ball after an epoch, and rows found outside it.
struct FeasibilityCounters {
  std::uint64_t rows_checked = 0;
  std::uint64_t violations = 0;
};
bool feasibility_asserts_enabled();
FeasibilityCounters feasibility_counters();

LocalWeightSet shared_weights(std::span<const double> w, double p);

// ---------------------------------------------------------------------------
// Deployment

enum class FusionMode { kPureRpau, kPurePseudoneg, kNonpure };
std::string_view to_string(FusionMode mode);
FusionMode fusion_mode_from_string(std::string_view name);

enum class OptimizerKind { kInteriorPoint, kFrankWolfe };
std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

/// How test samples pick up weights: the mean of the k nearest anchors' rows,
/// each optionally rescaled to unit l_{p_i} norm first, where
/// k = min(n, max(neighbors, ceil(neighbor_fraction * n))) for n anchors. With
/// weighted_average the resulting row is divided by its l1 norm, so every
/// fused score is a weighted average of the learner scores.
struct AnchorRule {
  int neighbors = 1;
  bool unit_norm_rows = false;
  bool weighted_average = false;
  double neighbor_fraction = 0.0;

  Index neighbors_for(Index anchors) const;
};

struct FusionModel {
  MinMaxScaler scaler;
  std::vector<BaseLearnerModel> learners;
  NormalizerState normalizer;
  LocalWeightSet weights;
  AnchorRule anchor_rule;
  double threshold = 0.0;
  FusionMode mode = FusionMode::kPureRpau;
  OptimizerKind optimizer = OptimizerKind::kInteriorPoint;
  OptimizerConfig config;
  std::uint64_t seed = 0;

  /// Throws InvalidInput unless d >= 2 learners, weights match, threshold finite.
  void validate() const;
};

/// m x d effective weight rows for the given (already scaled) features.
Matrix test_time_weights(const LocalWeightSet& weights, const AnchorRule& rule, const Matrix& features,
                         Exec exec = Exec::kParallel);

/// <s_test, w> per sample with anchor-looked-up weights.
Vector fuse_scores(const LocalWeightSet& weights, const AnchorRule& rule, const ScoreMatrix& zscored,
                   const Matrix& features, Exec exec = Exec::kParallel);
Vector fuse_scores(const FusionModel& model, const ScoreMatrix& zscored, const Matrix& features);

/// Full deployment path from raw features: scale, score with every learner,
/// z-score, fuse.
Vector predict(const FusionModel& model, const Matrix& raw_features);

enum class BaselineRule { kSum, kSingleBest };
Vector baseline_fuse(const ScoreMatrix& scores, BaselineRule rule, int learner_index = 0);

}  // namespace lpfusion
