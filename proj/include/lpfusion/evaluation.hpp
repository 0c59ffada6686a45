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

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lpfusion {

// Scores are oriented higher = more normal. Labels are +1 normal, -1 anomalous.

/// Mann-Whitney area with the normal class as positive; ties count one half.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Average precision with anomalies as the positive class, ranked by -score.
/// A block of tied scores enters as a single step.
double auc_pr(std::span<const double> scores, std::span<const int> labels);

/// sqrt(TPR * TNR) with score >= threshold predicted normal.
double g_mean(std::span<const double> scores, std::span<const int> labels, double threshold);

enum class ThresholdStrategy { kRpau, kPseudoNegGmean };
std::string_view to_string(ThresholdStrategy strategy);

/// rpau: the rho-th percentile of normal validation scores (labels ignored).
/// pseudo_neg_gmean: the midpoint between adjacent distinct sorted scores with
/// the best G-mean; equal G-means go to the widest gap, then the lowest one.
double select_threshold(std::span<const double> scores, std::optional<std::span<const int>> labels,
                        ThresholdStrategy strategy, int rho = 5);

/// Mean relative margin above the rho-th percentile theta: (1/n) sum max(0, s_i/theta - 1),
/// computed after shifting all scores so the minimum sits at 1.
double rpau_score(std::span<const double> scores, int rho);

/// Best G-mean reachable on (scores, labels), i.e. at select_threshold(pseudo_neg_gmean).
double best_g_mean(std::span<const double> scores, std::span<const int> labels);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};
MetricSummary summarize(std::span<const double> values);

struct EvalReport {
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double g_mean = 0.0;
  double threshold = 0.0;
};
EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold);

// ---------------------------------------------------------------------------
// Rank test

/// datasets x methods, missing cells empty. Higher values are better.
struct RankTable {
  std::vector<std::string> methods;
  std::vector<std::string> datasets;
  std::vector<std::vector<std::optional<double>>> values;

  void validate() const;
};

/// CSV with a header row (first cell names the dataset column, then one column
/// per method) and one row per dataset; an empty cell is missing.
RankTable read_rank_table(std::istream& in);
RankTable read_rank_table(const std::string& path);
void write_rank_table(std::ostream& out, const RankTable& table);

/// Descending ranks (largest value = rank 1), ties get their average rank.
std::vector<double> descending_ranks(std::span<const double> values);

struct RankTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
  std::vector<double> mean_ranks;            // per method, over the datasets that observe it
  std::vector<std::string> skipped_datasets;
};

/// Skillings-Mack statistic over the usable rows; reduces to Friedman's
/// statistic on complete tables.
RankTestResult skillings_mack(const RankTable& table);

/// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);
double chi_square_sf(double x, double dof);

}  // namespace lpfusion
