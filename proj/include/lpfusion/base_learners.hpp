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
#include <string_view>
#include <variant>
#include <vector>

#include "lpfusion/kernels.hpp"
#include "lpfusion/linalg.hpp"

namespace lpfusion {

enum class LearnerKind { kSvdd, kOcgp, kKpca, kGmm };

std::string_view to_string(LearnerKind kind);
LearnerKind learner_kind_from_string(std::string_view name);

inline constexpr std::array<LearnerKind, 4> kAllLearners = {
    LearnerKind::kSvdd, LearnerKind::kOcgp, LearnerKind::kKpca, LearnerKind::kGmm};

// Fixed solver settings of the individual learners.
inline constexpr double kSvddTolerance = 1e-6;
inline constexpr int kSvddMaxIterations = 2000;
inline constexpr double kOcgpJitter = 1e-3;
inline constexpr double kKpcaEigenFloor = 1e-10;
inline constexpr int kGmmMaxIterations = 200;
inline constexpr double kGmmTolerance = 1e-8;
inline constexpr double kGmmRidgeScale = 1e-6;

struct BaseLearnerSpec {
  LearnerKind kind = LearnerKind::kSvdd;
  std::optional<KernelSpec> kernel;   // SVDD, OCGP, KPCA
  std::optional<int> kpca_subspace_dim;
  std::optional<int> gmm_components;
  std::uint64_t seed = 0;             // GMM initialization only

  static BaseLearnerSpec svdd(KernelSpec kernel);
  static BaseLearnerSpec ocgp(KernelSpec kernel);
  static BaseLearnerSpec kpca(KernelSpec kernel, int subspace_dim);
  static BaseLearnerSpec gmm(int components, std::uint64_t seed);

  /// Throws InvalidInput unless exactly the fields relevant to `kind` are set.
  void validate() const;
};

/// Minimum enclosing ball in feature space. alpha lives on the simplex.
struct SvddModel {
  KernelSpec kernel;
  Matrix support;       // training rows
  Vector alpha;
  double center_norm = 0.0;  // alpha^T K alpha
  int iterations = 0;
};

struct OcgpModel {
  KernelSpec kernel;
  Matrix train;
  Vector coef;          // (K + jitter I)^{-1} 1
  double jitter = kOcgpJitter;
};

struct KpcaModel {
  KernelSpec kernel;
  Matrix train;
  Vector kernel_row_means;
  double kernel_mean = 0.0;
  Vector eigenvalues;   // descending, all > kKpcaEigenFloor
  Matrix components;    // n x q, column l = u_l / sqrt(lambda_l)
};

struct GmmModel {
  Vector weights;
  Matrix means;                      // components x f
  std::vector<Matrix> covariances;   // ridge already added
  double ridge = 0.0;
  int iterations = 0;

  /// Lower Cholesky factors and log-normalizers, rebuilt from covariances.
  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  std::vector<double> log_norms;
  void prepare();
};

struct BaseLearnerModel {
  BaseLearnerSpec spec;
  std::variant<SvddModel, OcgpModel, KpcaModel, GmmModel> state;

  LearnerKind kind() const { return spec.kind; }
  Index feature_dim() const;
};

BaseLearnerModel fit_base_learner(const BaseLearnerSpec& spec, const Matrix& x_train);

/// Higher = more normal, for every learner kind:
///   SVDD  -> minus squared feature-space distance to the center
///   OCGP  -> predictive mean of the regression onto all-ones targets
///   KPCA  -> minus feature-space reconstruction error
///   GMM   -> log-density
Vector score_samples(const BaseLearnerModel& model, const Matrix& x);

struct SimplexSolution {
  Vector alpha;
  int iterations = 0;
  double gap = 0.0;
};

/// Frank-Wolfe with exact line search for min a^T K a - diag(K)^T a over the
/// probability simplex, started from the uniform point. The observer, when
/// set, sees every iterate.
SimplexSolution solve_min_enclosing_ball(const Matrix& gram, double tolerance, int max_iterations,
                                         const std::function<void(const Vector&)>& observer = {});

/// KPCA dimensions searched for n training rows: 2, 6, 10, ... below n, then n.
std::vector<int> kpca_dim_grid(int n);

/// KPCA scores of x for every retained dimension at once: column q - 1 holds
/// the score with the leading q components.
Matrix kpca_score_path(const BaseLearnerModel& model, const Matrix& x);

/// Keeps the leading `dim` components of a fitted KPCA model (grid search
/// fits the eigendecomposition once per kernel width).
BaseLearnerModel with_kpca_dim(const BaseLearnerModel& model, int dim);

}  // namespace lpfusion
