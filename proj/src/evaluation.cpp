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


#include "lpfusion/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Dense>

#include "lpfusion/error.hpp"
#include "lpfusion/log.hpp"
#include "lpfusion/scorespace.hpp"

namespace lpfusion {

namespace {

struct ClassCounts {
  std::size_t normal = 0;
  std::size_t anomalous = 0;
};

ClassCounts count_classes(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorKind::kInvalidInput, "scores and labels differ in length");
  ClassCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(std::isfinite(scores[i]), ErrorKind::kInvalidInput, "scores must be finite");
    if (labels[i] == 1) ++c.normal;
    else if (labels[i] == -1) ++c.anomalous;
    else fail(ErrorKind::kInvalidInput, "labels must be +1 or -1");
  }
  return c;
}

std::vector<std::size_t> ascending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

}  // namespace

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = count_classes(scores, labels);
  require(c.normal > 0 && c.anomalous > 0, ErrorKind::kUndefinedMetric, "auc_roc needs both classes");
  const auto idx = ascending_order(scores);
  double rank_sum = 0.0;
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a;
    while (b < idx.size() && scores[idx[b]] == scores[idx[a]]) ++b;
    const double avg = 0.5 * static_cast<double>(a + 1 + b);  // mean of ranks a+1..b
    for (std::size_t t = a; t < b; ++t)
      if (labels[idx[t]] == 1) rank_sum += avg;
    a = b;
  }
  const double np = static_cast<double>(c.normal), nn = static_cast<double>(c.anomalous);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_pr(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = count_classes(scores, labels);
  require(c.anomalous > 0, ErrorKind::kUndefinedMetric, "auc_pr needs at least one anomaly");
  // most anomalous first = lowest score first
  const auto idx = ascending_order(scores);
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a, block_pos = 0;
    while (b < idx.size() && scores[idx[b]] == scores[idx[a]]) {
      if (labels[idx[b]] == -1) ++block_pos;
      ++b;
    }
    tp += block_pos;
    seen += b - a;
    if (block_pos > 0) ap += static_cast<double>(block_pos) * (static_cast<double>(tp) / static_cast<double>(seen));
    a = b;
  }
  return ap / static_cast<double>(c.anomalous);
}

double g_mean(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const ClassCounts c = count_classes(scores, labels);
  require(c.normal > 0 && c.anomalous > 0, ErrorKind::kUndefinedMetric, "g_mean needs both classes");
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool normal = scores[i] >= threshold;
    if (labels[i] == 1 && normal) ++tp;
    if (labels[i] == -1 && !normal) ++tn;
  }
  return std::sqrt(static_cast<double>(tp) / static_cast<double>(c.normal) * static_cast<double>(tn) /
                   static_cast<double>(c.anomalous));
}

std::string_view to_string(ThresholdStrategy strategy) {
  return strategy == ThresholdStrategy::kRpau ? "rpau" : "pseudo_neg_gmean";
}

namespace {

double gmean_threshold(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = count_classes(scores, labels);
  require(c.normal > 0 && c.anomalous > 0, ErrorKind::kInvalidInput, "pseudo_neg_gmean needs both labels");
  const auto idx = ascending_order(scores);
  // sweep: threshold between block k and k+1 predicts normal for everything above
  std::size_t below_normal = 0, below_anom = 0;
  double best_g = -1.0, best_gap = -1.0, best_t = scores[idx.front()];
  for (std::size_t a = 0; a < idx.size();) {
    std::size_t b = a;
    while (b < idx.size() && scores[idx[b]] == scores[idx[a]]) {
      if (labels[idx[b]] == 1) ++below_normal;
      else ++below_anom;
      ++b;
    }
    if (b == idx.size()) break;
    const double lo = scores[idx[a]], hi = scores[idx[b]];
    const double tpr = static_cast<double>(c.normal - below_normal) / static_cast<double>(c.normal);
    const double tnr = static_cast<double>(below_anom) / static_cast<double>(c.anomalous);
    const double g = std::sqrt(tpr * tnr);
    const double gap = hi - lo;
    if (g > best_g + 1e-12 || (std::abs(g - best_g) <= 1e-12 && gap > best_gap)) {
      best_g = g;
      best_gap = gap;
      best_t = lo + 0.5 * gap;
    }
    a = b;
  }
  return best_t;
}

}  // namespace

double select_threshold(std::span<const double> scores, std::optional<std::span<const int>> labels,
                        ThresholdStrategy strategy, int rho) {
  require(!scores.empty(), ErrorKind::kInsufficientData, "threshold selection on empty scores");
  if (strategy == ThresholdStrategy::kRpau) return percentile(scores, rho);
  require(labels.has_value(), ErrorKind::kInvalidInput, "pseudo_neg_gmean needs labels");
  return gmean_threshold(scores, *labels);
}

double rpau_score(std::span<const double> scores, int rho) {
  require(!scores.empty(), ErrorKind::kInsufficientData, "rpau on empty scores");
  const double shift = 1.0 - *std::min_element(scores.begin(), scores.end());
  const double theta = percentile(scores, rho) + shift;
  double acc = 0.0;
  for (double s : scores) acc += std::max(0.0, (s + shift) / theta - 1.0);
  return acc / static_cast<double>(scores.size());
}

double best_g_mean(std::span<const double> scores, std::span<const int> labels) {
  return g_mean(scores, labels, gmean_threshold(scores, labels));
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary m;
  m.count = values.size();
  if (values.empty()) return m;
  double acc = 0.0;
  for (double v : values) acc += v;
  m.mean = acc / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - m.mean) * (v - m.mean);
  m.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return m;
}

EvalReport evaluate(std::span<const double> scores, std::span<const int> labels, double threshold) {
  return EvalReport{auc_roc(scores, labels), auc_pr(scores, labels), g_mean(scores, labels, threshold), threshold};
}

// ---------------------------------------------------------------------------
// Rank table

void RankTable::validate() const {
  require(methods.size() >= 2, ErrorKind::kInvalidInput, "rank table needs at least 2 methods");
  require(datasets.size() >= 2, ErrorKind::kInvalidInput, "rank table needs at least 2 datasets");
  require(values.size() == datasets.size(), ErrorKind::kInvalidInput, "rank table row count mismatch");
  for (const auto& row : values) {
    require(row.size() == methods.size(), ErrorKind::kInvalidInput, "rank table column count mismatch");
    for (const auto& v : row)
      if (v) require(std::isfinite(*v), ErrorKind::kInvalidInput, "rank table values must be finite");
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

RankTable read_rank_table(std::istream& in) {
  RankTable t;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::kParseError, "rank table is empty");
  auto header = split_csv_line(line);
  require(header.size() >= 2, ErrorKind::kParseError, "rank table header needs a dataset column and methods");
  t.methods.assign(header.begin() + 1, header.end());
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (split_csv_line(line) == std::vector<std::string>{""}) continue;
    auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::kParseError,
            "rank table row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    t.datasets.push_back(cells[0]);
    std::vector<std::optional<double>> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.emplace_back();
        continue;
      }
      double v = 0.0;
      const auto r = std::from_chars(cells[c].data(), cells[c].data() + cells[c].size(), v);
      require(r.ec == std::errc() && r.ptr == cells[c].data() + cells[c].size(), ErrorKind::kParseError,
              "rank table row " + std::to_string(row_no) + ", column '" + t.methods[c - 1] + "': '" + cells[c] +
                  "' is not a number");
      row.emplace_back(v);
    }
    t.values.push_back(std::move(row));
  }
  t.validate();
  return t;
}

RankTable read_rank_table(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIoError, "cannot open rank table '" + path + "'");
  return read_rank_table(in);
}

void write_rank_table(std::ostream& out, const RankTable& table) {
  out << "dataset";
  for (const auto& m : table.methods) out << ',' << m;
  out << '\n';
  for (std::size_t r = 0; r < table.datasets.size(); ++r) {
    out << table.datasets[r];
    for (const auto& v : table.values[r]) {
      out << ',';
      if (v) out << format_double(*v);
    }
    out << '\n';
  }
}

std::vector<double> descending_ranks(std::span<const double> values) {
  const std::size_t k = values.size();
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  std::vector<double> ranks(k);
  for (std::size_t a = 0; a < k;) {
    std::size_t b = a;
    while (b < k && values[idx[b]] == values[idx[a]]) ++b;
    const double avg = 0.5 * static_cast<double>(a + 1 + b);
    for (std::size_t t = a; t < b; ++t) ranks[idx[t]] = avg;
    a = b;
  }
  return ranks;
}

RankTestResult skillings_mack(const RankTable& table) {
  table.validate();
  const std::size_t t = table.methods.size();
  RankTestResult res;
  res.dof = static_cast<int>(t) - 1;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(static_cast<Index>(t));
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Index>(t), static_cast<Index>(t));
  std::vector<double> rank_sum(t, 0.0);
  std::vector<int> rank_count(t, 0);
  std::size_t used = 0;

  for (std::size_t r = 0; r < table.datasets.size(); ++r) {
    std::vector<std::size_t> observed;
    std::vector<double> vals;
    for (std::size_t m = 0; m < t; ++m)
      if (table.values[r][m]) {
        observed.push_back(m);
        vals.push_back(*table.values[r][m]);
      }
    if (observed.size() < 2) {
      log::warning("rank test: dataset '" + table.datasets[r] + "' has fewer than 2 observations, skipped");
      res.skipped_datasets.push_back(table.datasets[r]);
      continue;
    }
    ++used;
    const double kj = static_cast<double>(observed.size());
    const double weight = std::sqrt(12.0 / (kj + 1.0));
    const auto ranks = descending_ranks(vals);
    // tied ranks shrink the block's rank variance by this factor
    std::vector<double> sorted(vals);
    std::sort(sorted.begin(), sorted.end());
    double ties = 0.0;
    for (std::size_t lo = 0; lo < sorted.size();) {
      std::size_t hi = lo;
      while (hi < sorted.size() && sorted[hi] == sorted[lo]) ++hi;
      const double tsz = static_cast<double>(hi - lo);
      ties += tsz * tsz * tsz - tsz;
      lo = hi;
    }
    const double shrink = 1.0 - ties / (kj * kj * kj - kj);
    for (std::size_t q = 0; q < observed.size(); ++q) {
      const std::size_t m = observed[q];
      a[static_cast<Index>(m)] += weight * (ranks[q] - 0.5 * (kj + 1.0));
      rank_sum[m] += ranks[q];
      ++rank_count[m];
      for (std::size_t q2 = 0; q2 < observed.size(); ++q2) {
        if (q2 == q) continue;
        cov(static_cast<Index>(m), static_cast<Index>(observed[q2])) -= shrink;
        cov(static_cast<Index>(m), static_cast<Index>(m)) += shrink;
      }
    }
  }
  require(used > 0, ErrorKind::kInsufficientData, "rank test: no dataset has 2 or more observations");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  Eigen::VectorXd proj = eig.eigenvectors().transpose() * a;
  double stat = 0.0;
  for (Index l = 0; l < proj.size(); ++l) {
    const double lambda = eig.eigenvalues()[l];
    if (lambda > 1e-10 * top) stat += proj[l] * proj[l] / lambda;
  }
  res.statistic = std::max(0.0, stat);
  res.p_value = chi_square_sf(res.statistic, res.dof);
  res.mean_ranks.resize(t);
  for (std::size_t m = 0; m < t; ++m)
    res.mean_ranks[m] = rank_count[m] > 0 ? rank_sum[m] / rank_count[m] : std::numeric_limits<double>::quiet_NaN();
  return res;
}

// ---------------------------------------------------------------------------
// Incomplete gamma

double regularized_gamma_q(double a, double x) {
  require(a > 0.0, ErrorKind::kInvalidInput, "incomplete gamma needs a > 0");
  if (x <= 0.0) return 1.0;
  const double eps = 1e-16;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  if (x < a + 1.0) {
    // series for P
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 10000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * eps) break;
    }
    return std::clamp(1.0 - sum * std::exp(log_prefix), 0.0, 1.0);
  }
  // continued fraction for Q (modified Lentz)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return std::clamp(std::exp(log_prefix) * h, 0.0, 1.0);
}

double chi_square_sf(double x, double dof) {
  require(dof > 0.0, ErrorKind::kInvalidInput, "chi-square needs positive degrees of freedom");
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

}  // namespace lpfusion
