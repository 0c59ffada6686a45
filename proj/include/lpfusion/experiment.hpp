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
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpfusion/base_learners.hpp"
#include "lpfusion/evaluation.hpp"
#include "lpfusion/fusion.hpp"
#include "lpfusion/linalg.hpp"

namespace lpfusion {

// ---------------------------------------------------------------------------
// Data

struct DatasetSchema {
  std::string name;
  std::string label_column;
  std::string normal_value;
  std::vector<std::string> feature_columns;   // empty = every non-label column
  std::vector<std::string> anomaly_values;    // empty = any other label is anomalous
  std::string provenance;
};

DatasetSchema load_schema(const std::string& path);

struct Dataset {
  std::string name;
  Matrix features;              // unscaled
  std::vector<int> labels;      // +1 normal, -1 anomalous
  std::vector<std::string> feature_names;
  std::string provenance;
  std::size_t rejected_rows = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t normal_count() const;
  std::size_t anomaly_count() const { return size() - normal_count(); }
};

/// Rows with an empty or "?" cell are dropped and counted; any other
/// non-numeric feature cell is a ParseError naming its row and column.
Dataset load_dataset(const std::string& csv_path, const DatasetSchema& schema);
Dataset load_dataset(std::istream& csv, const DatasetSchema& schema);

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { kPure, kNonpure };
std::string_view to_string(SplitMode mode);

struct SplitRatios {
  double train = 0.7;
  double validation = 0.2;
  double anomaly_reserve = 0.2;      // nonpure: share of anomalies held out for test
  double anomaly_train_share = 0.5;  // nonpure: share of the rest that goes to train
};

struct SplitPlan {
  SplitMode mode = SplitMode::kPure;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

SplitPlan make_splits(const Dataset& dataset, SplitMode mode, std::uint64_t seed,
                      const SplitRatios& ratios = {});

// ---------------------------------------------------------------------------
// Grid search

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

struct GridSearchResult {
  std::vector<double> best;
  double score = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive search over the Cartesian product (first axis varies slowest).
/// The first tuple reaching the maximum wins; NaN scores never win.
GridSearchResult grid_search(const std::vector<GridAxis>& axes,
                             const std::function<double(std::span<const double>)>& evaluate);

enum class Criterion { kRpau, kPseudoNegGmean, kNonpureValAuc };
std::string_view to_string(Criterion criterion);
Criterion criterion_for(FusionMode mode);
SplitMode split_mode_for(FusionMode mode);

// ---------------------------------------------------------------------------
// Trials

enum class Method { kInteriorPoint, kFrankWolfe, kSumRule, kSingleBest, kSvdd, kOcgp, kKpca, kGmm };
std::string_view to_string(Method method);
Method method_from_string(std::string_view name);
inline constexpr std::array<Method, 8> kAllMethods = {
    Method::kInteriorPoint, Method::kFrankWolfe, Method::kSumRule, Method::kSingleBest,
    Method::kSvdd,          Method::kOcgp,       Method::kKpca,    Method::kGmm};

struct ExperimentConfig {
  FusionMode mode = FusionMode::kPureRpau;
  std::vector<double> p_grid{kPGrid.begin(), kPGrid.end()};
  std::vector<int> rho_grid{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> width_multipliers{kWidthMultipliers.begin(), kWidthMultipliers.end()};
  std::vector<int> gmm_components{1, 2, 3};
  int learner_rho = 5;
  OptimizerConfig optimizer;
  AnchorRule anchor_rule{10, true, true, 1.0 / 3.0};
  double pseudo_fraction = 0.5;
  SplitRatios ratios;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  int jobs = 1;

  void validate() const;
};

struct LearnerChoice {
  LearnerKind kind = LearnerKind::kSvdd;
  double width_multiplier = 0.0;
  int kpca_dim = 0;
  int gmm_components = 0;
  double validation_score = 0.0;
};

struct MethodOutcome {
  Method method = Method::kSumRule;
  EvalReport test;
  double validation_score = 0.0;
  double p_base = 0.0;   // fused methods only
  int rho = 0;
  int epochs = 0;
  int single_best = -1;  // chosen learner index
};

struct TrialResult {
  int trial = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<LearnerChoice> learners;
  std::vector<MethodOutcome> methods;
  std::vector<std::pair<std::string, double>> timings;  // seconds per phase
};

struct MethodAggregate {
  Method method = Method::kSumRule;
  MetricSummary auc_roc;
  MetricSummary auc_pr;
  MetricSummary g_mean;
};

struct RunSummary {
  std::string dataset;
  ExperimentConfig config;
  std::uint64_t base_seed = 0;
  std::vector<TrialResult> trials;   // ordered by trial index
  std::vector<MethodAggregate> aggregates;
  int failed = 0;

  const MethodAggregate& aggregate(Method method) const;
};

/// Split, fit learners, normalize, tune, optimize, threshold and score once.
/// Never throws for pipeline failures: they come back as ok = false.
TrialResult run_trial(const Dataset& dataset, const ExperimentConfig& config, int trial,
                      std::uint64_t seed);

/// Trial t runs with seed base_seed + t; up to config.jobs trials run at
/// once. Throws RunFailed when more than half the trials fail.
RunSummary run_trials(const Dataset& dataset, const ExperimentConfig& config, int n_trials,
                      std::uint64_t base_seed);

std::vector<MethodAggregate> aggregate_trials(std::span<const TrialResult> trials,
                                              std::span<const Method> methods);

/// One JSON record per trial followed by one per method aggregate. Contains
/// no wall-clock data, so repeated runs are byte-identical.
void write_results_jsonl(std::ostream& out, const RunSummary& summary);
void write_timings_csv(std::ostream& out, const RunSummary& summary);

/// Rows = datasets, columns = methods, cells "mean±std" in percent with two decimals.
std::string render_table(std::span<const RunSummary> runs, std::string_view metric = "auc_roc");

/// Tunes on one split and returns a deployable model for the chosen optimizer.
FusionModel train_model(const Dataset& dataset, const ExperimentConfig& config, std::uint64_t seed,
                        OptimizerKind optimizer);

// ---------------------------------------------------------------------------
// Timing ablation

struct SyntheticProblem {
  ScoreMatrix scores;
  std::vector<int> labels;
};

/// Labels +-1 in equal shares; column j carries signal y * (0.5 + 0.25 j) plus
/// unit Gaussian noise.
SyntheticProblem make_synthetic_problem(int n, int d, std::uint64_t seed);

struct AblationCell {
  double p = 0.0;
  double tolerance = 0.0;
  double ip_seconds = 0.0;
  double fw_seconds = 0.0;
  int ip_epochs = 0;
  int fw_iterations = 0;
  bool ip_converged = false;
  bool fw_converged = false;

  double ratio() const { return fw_seconds / ip_seconds; }
};

inline constexpr std::array<double, 4> kAblationP = {32.0 / 31.0, 8.0 / 7.0, 2.0, 100.0};
inline constexpr std::array<double, 3> kAblationTolerances = {1e-2, 1e-3, 1e-4};

/// Both optimizers on the same synthetic problem, locality disabled, timed
/// sequentially; each time is the median over `repeats` runs.
std::vector<AblationCell> timing_ablation(std::span<const double> p_values,
                                          std::span<const double> tolerances, int n, int d,
                                          std::uint64_t seed, int repeats = 3);

/// p rows x tolerance columns of FW/IP ratios. A ratio is prefixed with ">"
/// when Frank-Wolfe hit its iteration cap, "<" when the interior-point run did.
void write_ablation_csv(std::ostream& out, std::span<const AblationCell> cells);

}  // namespace lpfusion
