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


#include "lpfusion/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lpfusion/error.hpp"
#include "lpfusion/log.hpp"

namespace lpfusion {

namespace {

inline double abs_pow(double v, double p) { return v == 0.0 ? 0.0 : std::pow(std::abs(v), p); }

inline double signed_pow(double v, double p) {
  if (v == 0.0) return 0.0;
  const double m = std::pow(std::abs(v), p);
  return v > 0.0 ? m : -m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * b[j];
  return acc;
}

inline double hinge(std::span<const double> s, int y, std::span<const double> w) {
  return std::max(0.0, 1.0 - static_cast<double>(y) * dot(s, w));
}

void check_p(double p) {
  require(p >= kMinP && p <= kMaxP && std::isfinite(p), ErrorKind::kInvalidInput,
          "p = " + std::to_string(p) + " outside [1+1e-6, 100]");
}

void check_labels(std::span<const int> labels) {
  for (int y : labels) require(y == 1 || y == -1, ErrorKind::kInvalidInput, "labels must be +1 or -1");
}

}  // namespace

double lp_norm_pow(std::span<const double> w, double p) {
  double acc = 0.0;
  for (double v : w) acc += abs_pow(v, p);
  return acc;
}

double lp_norm(std::span<const double> w, double p) {
  double mx = 0.0;
  for (double v : w) mx = std::max(mx, std::abs(v));
  if (mx == 0.0) return 0.0;
  double acc = 0.0;
  for (double v : w) acc += abs_pow(v / mx, p);
  return mx * std::pow(acc, 1.0 / p);
}

double LocalWeightSet::max_norm() const {
  double mx = 0.0;
  for (Index i = 0; i < weights.rows(); ++i) mx = std::max(mx, lp_norm(row_span(weights, i), local_p[i]));
  return mx;
}

void LocalWeightSet::validate() const {
  require(weights.rows() >= 1 && weights.cols() >= 1, ErrorKind::kInvalidInput, "weight set is empty");
  require(local_p.size() == weights.rows(), ErrorKind::kInvalidInput, "local_p length does not match weight rows");
  require(anchor_features.rows() == 0 || anchor_features.rows() == weights.rows(), ErrorKind::kInvalidInput,
          "anchor rows do not match weight rows");
  require(anchor_features.rows() > 0 || weights.rows() == 1, ErrorKind::kInvalidInput,
          "a weight set without anchors must have exactly one row");
  require(weights.allFinite() && anchor_features.allFinite(), ErrorKind::kInvalidInput, "weight set has non-finite values");
  for (Index i = 0; i < local_p.size(); ++i) check_p(local_p[i]);
  const double mx = max_norm();
  require(mx <= 1.0 + kFeasibilitySlack, ErrorKind::kInvalidInput,
          "weight row norm " + std::to_string(mx) + " exceeds the unit ball");
}

void OptimizerConfig::validate() const {
  check_p(p_base);
  require(mu0 > 0.0, ErrorKind::kInvalidInput, "mu0 must be positive");
  require(beta > 0.0 && beta < 1.0, ErrorKind::kInvalidInput, "beta must be in (0, 1)");
  require(learning_rate > 0.0, ErrorKind::kInvalidInput, "learning_rate must be positive");
  require(max_epochs >= 1, ErrorKind::kInvalidInput, "max_epochs must be positive");
  require(tolerance > 0.0, ErrorKind::kInvalidInput, "tolerance must be positive");
  require(locality_k >= 1, ErrorKind::kInvalidInput, "locality_k must be positive");
}

// ---------------------------------------------------------------------------
// Locality

double locality_p_from_ratio(double ratio, double p_base) {
  check_p(p_base);
  const double r = std::max(ratio, 1e-6);
  return std::clamp(1.0 + (p_base - 1.0) / r, kMinP, kMaxP);
}

namespace {

double knn_mean_distance(const Matrix& x, std::span<const double> q, int k, Index skip, std::vector<double>& buf) {
  buf.clear();
  for (Index j = 0; j < x.rows(); ++j)
    if (j != skip) buf.push_back(squared_distance(q, row_span(x, j)));
  const auto kk = static_cast<std::size_t>(k);
  std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk - 1), buf.end());
  std::sort(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(kk));
  double acc = 0.0;
  for (std::size_t t = 0; t < kk; ++t) acc += std::sqrt(buf[t]);
  return acc / static_cast<double>(k);
}

}  // namespace

LocalityIndex::LocalityIndex(const Matrix& x_train, int k, Exec exec) : x_train_(&x_train), k_(k) {
  const Index n = x_train.rows();
  require(k >= 1 && k < n, ErrorKind::kInvalidInput,
          "locality needs 1 <= k < n (k = " + std::to_string(k) + ", n = " + std::to_string(n) + ")");
  dispersion_.resize(n);
  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<double> buf;
#pragma omp for schedule(static)
      for (Index i = 0; i < n; ++i) dispersion_[i] = knn_mean_distance(x_train, row_span(x_train, i), k, i, buf);
    }
  } else {
    std::vector<double> buf;
    for (Index i = 0; i < n; ++i) dispersion_[i] = knn_mean_distance(x_train, row_span(x_train, i), k, i, buf);
  }
  median_ = percentile(std::span<const double>(dispersion_.data(), static_cast<std::size_t>(n)), 50.0);
  if (!(median_ > 0.0)) log::warning("locality: median neighbour distance is zero");
}

double LocalityIndex::dispersion(std::span<const double> x) const {
  require(static_cast<Index>(x.size()) == x_train_->cols(), ErrorKind::kInvalidInput, "locality query has wrong dimension");
  std::vector<double> buf;
  return knn_mean_distance(*x_train_, x, std::min<int>(k_, static_cast<int>(x_train_->rows())), -1, buf);
}

double LocalityIndex::p_for_dispersion(double dispersion, double p_base) const {
  double ratio = 1.0;
  if (median_ > 0.0) ratio = dispersion / median_;
  else if (dispersion > 0.0) ratio = std::numeric_limits<double>::infinity();
  return locality_p_from_ratio(ratio, p_base);
}

Vector LocalityIndex::training_p(double p_base) const {
  Vector p(dispersion_.size());
  for (Index i = 0; i < p.size(); ++i) p[i] = p_for_dispersion(dispersion_[i], p_base);
  return p;
}

double locality_p(std::span<const double> x, const Matrix& x_train, double p_base, int k) {
  const LocalityIndex index(x_train, k, Exec::kSerial);
  return index.p_for_dispersion(index.dispersion(x), p_base);
}

// ---------------------------------------------------------------------------
// Objective pieces

HingeTerm hinge_loss_and_grad(std::span<const double> s, int y, std::span<const double> w) {
  require(s.size() == w.size(), ErrorKind::kInvalidInput, "score and weight lengths differ");
  require(y == 1 || y == -1, ErrorKind::kInvalidInput, "label must be +1 or -1");
  HingeTerm t;
  t.grad = Vector::Zero(static_cast<Index>(w.size()));
  const double margin = 1.0 - static_cast<double>(y) * dot(s, w);
  require(std::isfinite(margin), ErrorKind::kInvalidInput, "hinge inputs must be finite");
  if (margin > 0.0) {
    t.loss = margin;
    for (std::size_t j = 0; j < s.size(); ++j) t.grad[static_cast<Index>(j)] = -static_cast<double>(y) * s[j];
  }
  return t;
}

double barrier_value(std::span<const double> w, double p, double mu) {
  const double t = lp_norm_pow(w, p);
  if (!(t < 1.0)) return std::numeric_limits<double>::infinity();
  return -mu * std::log1p(-t);
}

Vector barrier_grad(std::span<const double> w, double p, double mu) {
  check_p(p);
  const double t = lp_norm_pow(w, p);
  if (!(t < 1.0)) fail(ErrorKind::kInfeasiblePoint, "barrier gradient requested at ||w||_p >= 1");
  Vector g(static_cast<Index>(w.size()));
  const double scale = mu * p / (1.0 - t);
  for (std::size_t j = 0; j < w.size(); ++j) g[static_cast<Index>(j)] = scale * signed_pow(w[j], p - 1.0);
  return g;
}

Vector project_lp_ball(std::span<const double> w, double p) {
  check_p(p);
  Vector out = Eigen::Map<const Vector>(w.data(), static_cast<Index>(w.size()));
  const double norm = lp_norm(w, p);
  if (norm > 1.0) {
    out /= norm;
    // rounding can leave the result a hair outside
    while (lp_norm(std::span<const double>(out.data(), w.size()), p) > 1.0) out *= 1.0 - 1e-15;
  }
  return out;
}

double total_hinge_loss(const Matrix& scores, std::span<const int> labels, std::span<const double> w) {
  double acc = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) acc += hinge(row_span(scores, i), labels[static_cast<std::size_t>(i)], w);
  return acc;
}

double total_hinge_loss(const Matrix& scores, std::span<const int> labels, const Matrix& row_weights) {
  double acc = 0.0;
  for (Index i = 0; i < scores.rows(); ++i)
    acc += hinge(row_span(scores, i), labels[static_cast<std::size_t>(i)], row_span(row_weights, i));
  return acc;
}

// ---------------------------------------------------------------------------
// Interior point

namespace {

constexpr int kMaxHalvings = 40;
constexpr double kInteriorSlack = 1e-12;

// Rows on the boundary (after a radial projection) have an infinite barrier
// gradient; pull them back so that ||w||_p^p = 1 - kInteriorSlack.
inline void pull_inside(std::span<double> w, double p) {
  const double t = lp_norm_pow(w, p);
  if (t < 1.0 - kInteriorSlack) return;
  const double f = std::pow((1.0 - kInteriorSlack) / t, 1.0 / p);
  for (double& v : w) v *= f;
}

// Row objective: hinge + mu * (-ln(1 - ||w||_p^p)); +inf outside the open ball.
inline double row_objective(std::span<const double> s, int y, std::span<const double> w, double p, double mu) {
  const double t = lp_norm_pow(w, p);
  if (!(t < 1.0)) return std::numeric_limits<double>::infinity();
  return hinge(s, y, w) - mu * std::log1p(-t);
}

// The barrier only ever pulls a coordinate toward zero, so a step that carries
// it across zero is an overshoot unless the hinge part of the gradient pushes
// it that way too.
inline bool admissible_crossings(std::span<const double> w, std::span<const double> cand,
                                 std::span<const double> hinge_grad) {
  for (std::size_t j = 0; j < w.size(); ++j)
    if (w[j] != 0.0 && !(cand[j] * w[j] > 0.0) && !(hinge_grad[j] * w[j] > 0.0)) return false;
  return true;
}

// One barrier-gradient step on a single weight row, backtracking until the
// candidate is strictly feasible, crosses zero only where the hinge asks for
// it and does not increase the row objective.
struct RowScratch {
  explicit RowScratch(Index d)
      : dir(static_cast<std::size_t>(d)), cand(static_cast<std::size_t>(d)), hinge_dir(static_cast<std::size_t>(d)) {}
  std::vector<double> dir, cand, hinge_dir;
};

void step_row(std::span<const double> s, int y, std::span<double> w, double p, double mu, double lr,
              RowScratch& scratch) {
  auto& dir = scratch.dir;
  auto& cand = scratch.cand;
  auto& hinge_dir = scratch.hinge_dir;
  pull_inside(w, p);
  const std::size_t d = w.size();
  const double yd = static_cast<double>(y);
  const double t = lp_norm_pow(w, p);
  const bool active = 1.0 - yd * dot(s, w) > 0.0;
  const double scale = mu * p / (1.0 - t);
  for (std::size_t j = 0; j < d; ++j) {
    hinge_dir[j] = active ? -yd * s[j] : 0.0;
    dir[j] = hinge_dir[j] + scale * signed_pow(w[j], p - 1.0);
  }

  const double f0 = hinge(s, y, w) - mu * std::log1p(-t);
  double step = lr;
  for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
    for (std::size_t j = 0; j < d; ++j) cand[j] = w[j] - step * dir[j];
    if (!admissible_crossings(w, std::span<const double>(cand.data(), d), std::span<const double>(hinge_dir.data(), d)))
      continue;
    const double fcand = row_objective(s, y, std::span<const double>(cand.data(), d), p, mu);
    if (fcand <= f0) {
      std::copy(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(d), w.begin());
      break;
    }
  }
  const double norm = lp_norm(w, p);
  if (norm > 1.0)
    for (std::size_t j = 0; j < d; ++j) w[j] /= norm;
}

struct TiedTerms {
  double hinge = 0.0;
  double barrier = 0.0;
};

// Tied weights: the per-sample steps of one epoch all start from the same
// vector, so they collapse into a single step along their sum. Backtracks on
// the total objective sum_i hinge_i + n mu barrier, with margins cached so a
// trial step costs O(n).
TiedTerms tied_step(const Matrix& s, std::span<const int> labels, std::span<double> w, double p, double mu,
                    double lr, std::vector<double>& margin, std::vector<double>& slope) {
  const Index n = s.rows();
  const std::size_t d = w.size();
  const double nd = static_cast<double>(n);
  pull_inside(w, p);
  std::vector<double> g(d, 0.0), cand(d), hinge_grad(d);
  double h0 = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double y = static_cast<double>(labels[static_cast<std::size_t>(i)]);
    const auto si = row_span(s, i);
    const double m = y * dot(si, w);
    margin[static_cast<std::size_t>(i)] = m;
    if (1.0 - m > 0.0) {
      h0 += 1.0 - m;
      for (std::size_t j = 0; j < d; ++j) g[j] -= y * si[j];
    }
  }
  hinge_grad = g;
  const double t = lp_norm_pow(w, p);
  const double scale = nd * mu * p / (1.0 - t);
  for (std::size_t j = 0; j < d; ++j) g[j] += scale * signed_pow(w[j], p - 1.0);
  for (Index i = 0; i < n; ++i)
    slope[static_cast<std::size_t>(i)] =
        static_cast<double>(labels[static_cast<std::size_t>(i)]) * dot(row_span(s, i), g);

  const double f0 = h0 - nd * mu * std::log1p(-t);
  TiedTerms out{h0, -std::log1p(-t)};
  double step = lr;
  for (int k = 0; k < kMaxHalvings; ++k, step *= 0.5) {
    for (std::size_t j = 0; j < d; ++j) cand[j] = w[j] - step * g[j];
    if (!admissible_crossings(w, cand, hinge_grad)) continue;
    const double tc = lp_norm_pow(cand, p);
    if (!(tc < 1.0)) continue;
    double hc = 0.0;
    for (Index i = 0; i < n; ++i)
      hc += std::max(0.0, 1.0 - margin[static_cast<std::size_t>(i)] + step * slope[static_cast<std::size_t>(i)]);
    const double bc = -std::log1p(-tc);
    if (hc + nd * mu * bc <= f0) {
      std::copy(cand.begin(), cand.end(), w.begin());
      out = {hc, bc};
      break;
    }
  }
  const double norm = lp_norm(w, p);
  if (norm > 1.0) {
    for (std::size_t j = 0; j < d; ++j) w[j] /= norm;
    out = {total_hinge_loss(s, labels, std::span<const double>(w.data(), d)), -std::log1p(-lp_norm_pow(w, p))};
  }
  return out;
}

std::vector<double> initial_row(Index d, double p) {
  // uniform direction with ||w||_p^p = 1/2
  const double v = std::pow(0.5 / static_cast<double>(d), 1.0 / p);
  return std::vector<double>(static_cast<std::size_t>(d), v);
}

std::atomic<std::uint64_t> g_rows_checked{0};
std::atomic<std::uint64_t> g_violations{0};

[[maybe_unused]] void check_norm(std::span<const double> w, double p, const std::string& what, int epoch) {
  g_rows_checked.fetch_add(1, std::memory_order_relaxed);
  const double norm = lp_norm(w, p);
  if (!(norm <= 1.0 + kFeasibilitySlack)) {
    g_violations.fetch_add(1, std::memory_order_relaxed);
    fail(ErrorKind::kInfeasiblePoint,
         what + " has norm " + std::to_string(norm) + " after epoch " + std::to_string(epoch));
  }
}

[[maybe_unused]] void check_feasible(const LocalWeightSet& ws, int epoch) {
  for (Index i = 0; i < ws.weights.rows(); ++i) {
    g_rows_checked.fetch_add(1, std::memory_order_relaxed);
    const double norm = lp_norm(row_span(ws.weights, i), ws.local_p[i]);
    if (!(norm <= 1.0 + kFeasibilitySlack)) {
      g_violations.fetch_add(1, std::memory_order_relaxed);
      fail(ErrorKind::kInfeasiblePoint, "weight row " + std::to_string(i) + " has norm " + std::to_string(norm) +
                                            " after epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

bool feasibility_asserts_enabled() {
#ifdef LPFUSION_FEASIBILITY_ASSERTS
  return true;
#else
  return false;
#endif
}

FeasibilityCounters feasibility_counters() {
  return {g_rows_checked.load(std::memory_order_relaxed), g_violations.load(std::memory_order_relaxed)};
}

OptimizationResult optimize_interior_point(const ScoreMatrix& scores, const Matrix& features,
                                           std::span<const int> labels, const OptimizerConfig& config,
                                           Exec exec, const EpochObserver& observer) {
  config.validate();
  scores.validate();
  require(scores.stage != ScoreStage::kRaw, ErrorKind::kInvalidInput, "optimizer expects standardized scores");
  const Index n = scores.rows(), d = scores.cols();
  require(static_cast<Index>(labels.size()) == n, ErrorKind::kInvalidInput, "labels do not align with score rows");
  check_labels(labels);
  const Matrix& s = scores.values;

  OptimizationResult res;
  LocalWeightSet& ws = res.weights;
  const bool local = config.locality_enabled;
  if (local) {
    require(features.rows() == n, ErrorKind::kInvalidInput, "features do not align with score rows");
    const LocalityIndex index(features, config.locality_k, exec);
    ws.local_p = index.training_p(config.p_base);
    ws.anchor_features = features;
    ws.weights.resize(n, d);
    for (Index i = 0; i < n; ++i) {
      const auto row = initial_row(d, ws.local_p[i]);
      for (Index j = 0; j < d; ++j) ws.weights(i, j) = row[static_cast<std::size_t>(j)];
    }
  } else {
    ws.local_p = Vector::Constant(1, config.p_base);
    ws.weights.resize(1, d);
    const auto row = initial_row(d, config.p_base);
    for (Index j = 0; j < d; ++j) ws.weights(0, j) = row[static_cast<std::size_t>(j)];
  }

  std::vector<double> hinge_terms(static_cast<std::size_t>(n)), barrier_terms(static_cast<std::size_t>(n));
  double mu = config.mu0;
  double prev = std::numeric_limits<double>::quiet_NaN();
  const double lr = config.learning_rate;
  double tied_hinge = 0.0, tied_barrier = 0.0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (local) {
      auto body = [&](Index i, RowScratch& scratch) {
        const double p = ws.local_p[i];
        auto w = row_span(ws.weights, i);
        step_row(row_span(s, i), labels[static_cast<std::size_t>(i)], w, p, mu, lr, scratch);
        hinge_terms[static_cast<std::size_t>(i)] = hinge(row_span(s, i), labels[static_cast<std::size_t>(i)], w);
        barrier_terms[static_cast<std::size_t>(i)] = -std::log1p(-lp_norm_pow(w, p));
      };
      if (exec == Exec::kParallel) {
#pragma omp parallel
        {
          RowScratch scratch(d);
#pragma omp for schedule(static)
          for (Index i = 0; i < n; ++i) body(i, scratch);
        }
      } else {
        RowScratch scratch(d);
        for (Index i = 0; i < n; ++i) body(i, scratch);
      }
    } else {
      const TiedTerms tt = tied_step(s, labels, row_span(ws.weights, 0), config.p_base, mu, lr, hinge_terms,
                                     barrier_terms);
      tied_hinge = tt.hinge;
      tied_barrier = tt.barrier;
    }

    double h = 0.0, b = 0.0;
    if (local) {
      for (Index i = 0; i < n; ++i) {
        h += hinge_terms[static_cast<std::size_t>(i)];
        b += barrier_terms[static_cast<std::size_t>(i)];
      }
    } else {
      h = tied_hinge;
      b = static_cast<double>(n) * tied_barrier;
    }
    const double objective = h + mu * b;
    if (!std::isfinite(objective) || !ws.weights.allFinite())
      fail(ErrorKind::kNumericalFailure,
           "interior-point objective diverged at epoch " + std::to_string(epoch) + " (mu = " + std::to_string(mu) + ")");
#ifdef LPFUSION_FEASIBILITY_ASSERTS
    check_feasible(ws, epoch);
#endif
    res.objective = objective;
    res.hinge = h;
    res.epochs = epoch;
    if (observer) observer(EpochReport{epoch, mu, objective, h, &ws});
    const bool done = std::abs(prev - objective) < config.tolerance;
    prev = objective;
    mu *= config.beta;
    if (done) {
      res.converged = true;
      break;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Frank-Wolfe

Vector lp_ball_vertex(std::span<const double> gradient, double p) {
  check_p(p);
  const auto d = static_cast<Index>(gradient.size());
  Vector v = Vector::Zero(d);
  double mx = 0.0;
  for (double g : gradient) mx = std::max(mx, std::abs(g));
  if (mx == 0.0) return v;
  const double q = p / (p - 1.0);
  double acc = 0.0;
  for (double g : gradient) acc += abs_pow(g / mx, q);
  const double denom = std::pow(acc, (q - 1.0) / q);
  for (Index j = 0; j < d; ++j) {
    const double g = gradient[static_cast<std::size_t>(j)];
    const double a = abs_pow(g / mx, q - 1.0) / denom;
    v[j] = g > 0.0 ? -a : (g < 0.0 ? a : 0.0);
  }
  return v;
}

FrankWolfeResult optimize_frank_wolfe(const ScoreMatrix& scores, std::span<const int> labels, double p,
                                      const OptimizerConfig& config,
                                      const std::function<void(int, std::span<const double>)>& observer) {
  require(p > 1.0, ErrorKind::kInvalidInput, "frank-wolfe needs p > 1");
  check_p(p);
  config.validate();
  scores.validate();
  const Index n = scores.rows(), d = scores.cols();
  require(static_cast<Index>(labels.size()) == n, ErrorKind::kInvalidInput, "labels do not align with score rows");
  check_labels(labels);
  const Matrix& s = scores.values;

  Vector w = Vector::Constant(d, std::pow(static_cast<double>(d), -1.0 / p));
  FrankWolfeResult res;
  res.weights = w;
  res.objective = std::numeric_limits<double>::infinity();
  Vector g(d);
  for (int t = 0; t < config.max_epochs; ++t) {
    g.setZero();
    double obj = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double yd = static_cast<double>(labels[static_cast<std::size_t>(i)]);
      const double margin = 1.0 - yd * s.row(i).dot(w);
      if (margin > 0.0) {
        obj += margin;
        g.noalias() -= yd * s.row(i).transpose();
      }
    }
    if (obj < res.objective) {
      res.objective = obj;
      res.weights = w;
    }
    const Vector v = lp_ball_vertex(std::span<const double>(g.data(), static_cast<std::size_t>(d)), p);
    res.gap = g.dot(w - v);
    res.iterations = t;
    if (res.gap <= config.tolerance) {
      res.converged = true;
      return res;
    }
    const double gamma = 2.0 / (t + 2.0);
    w = (1.0 - gamma) * w + gamma * v;
    res.iterations = t + 1;
#ifdef LPFUSION_FEASIBILITY_ASSERTS
    check_norm(std::span<const double>(w.data(), static_cast<std::size_t>(d)), p, "frank-wolfe iterate", t + 1);
#endif
    if (observer) observer(t + 1, std::span<const double>(w.data(), static_cast<std::size_t>(d)));
  }
  const double last = total_hinge_loss(s, labels, std::span<const double>(w.data(), static_cast<std::size_t>(d)));
  if (last < res.objective) {
    res.objective = last;
    res.weights = w;
  }
  return res;
}

LocalWeightSet shared_weights(std::span<const double> w, double p) {
  LocalWeightSet ws;
  ws.weights = Eigen::Map<const Eigen::RowVectorXd>(w.data(), static_cast<Index>(w.size()));
  ws.local_p = Vector::Constant(1, p);
  return ws;
}

// ---------------------------------------------------------------------------
// Deployment

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kPureRpau: return "pure-rpau";
    case FusionMode::kPurePseudoneg: return "pure-pseudoneg";
    case FusionMode::kNonpure: return "nonpure";
  }
  return "unknown";
}

FusionMode fusion_mode_from_string(std::string_view name) {
  for (FusionMode m : {FusionMode::kPureRpau, FusionMode::kPurePseudoneg, FusionMode::kNonpure})
    if (to_string(m) == name) return m;
  fail(ErrorKind::kInvalidInput, "unknown mode '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kInteriorPoint ? "interior-point" : "frank-wolfe";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  if (name == "interior-point" || name == "ip") return OptimizerKind::kInteriorPoint;
  if (name == "frank-wolfe" || name == "fw") return OptimizerKind::kFrankWolfe;
  fail(ErrorKind::kInvalidInput, "unknown optimizer '" + std::string(name) + "'");
}

void FusionModel::validate() const {
  require(learners.size() >= 2, ErrorKind::kInvalidInput, "a fusion model needs at least 2 learners");
  weights.validate();
  require(weights.dims() == static_cast<Index>(learners.size()), ErrorKind::kInvalidInput,
          "weight width does not match learner count");
  require(normalizer.has_zscore() && normalizer.mean.size() == weights.dims(), ErrorKind::kInvalidInput,
          "normalizer does not match learner count");
  require(std::isfinite(threshold), ErrorKind::kInvalidInput, "threshold must be finite");
  require(anchor_rule.neighbors >= 1, ErrorKind::kInvalidInput, "anchor neighbours must be positive");
  require(anchor_rule.neighbor_fraction >= 0.0 && anchor_rule.neighbor_fraction <= 1.0, ErrorKind::kInvalidInput,
          "anchor fraction outside [0, 1]");
}

namespace {

Eigen::RowVectorXd rescaled_row(const LocalWeightSet& ws, Index r, bool unit) {
  Eigen::RowVectorXd w = ws.weights.row(r);
  if (unit) {
    const double norm = lp_norm(row_span(ws.weights, r), ws.local_p[r]);
    if (norm > 0.0) w /= norm;
  }
  return w;
}

}  // namespace

Index AnchorRule::neighbors_for(Index anchors) const {
  const auto share = static_cast<Index>(std::ceil(neighbor_fraction * static_cast<double>(anchors)));
  return std::min<Index>(std::max<Index>({static_cast<Index>(neighbors), share, 1}), anchors);
}

Matrix test_time_weights(const LocalWeightSet& weights, const AnchorRule& rule, const Matrix& features, Exec exec) {
  require(weights.weights.rows() >= 1, ErrorKind::kInvalidInput, "weight set is empty");
  const Index m = features.rows(), d = weights.dims();
  Matrix out(m, d);
  if (weights.anchor_features.rows() == 0) {
    Eigen::RowVectorXd w = rescaled_row(weights, 0, rule.unit_norm_rows);
    if (rule.weighted_average && w.lpNorm<1>() > 0.0) w /= w.lpNorm<1>();
    for (Index i = 0; i < m; ++i) out.row(i) = w;
    return out;
  }
  require(features.cols() == weights.anchor_features.cols(), ErrorKind::kInvalidInput,
          "query features do not match anchor dimension");
  const Index n = weights.anchor_features.rows();
  const Index k = rule.neighbors_for(n);
  Matrix rows(n, d);
  for (Index r = 0; r < n; ++r) rows.row(r) = rescaled_row(weights, r, rule.unit_norm_rows);

  auto body = [&](Index i, std::vector<std::pair<double, Index>>& buf) {
    buf.resize(static_cast<std::size_t>(n));
    for (Index r = 0; r < n; ++r)
      buf[static_cast<std::size_t>(r)] = {squared_distance(row_span(features, i), row_span(weights.anchor_features, r)), r};
    std::partial_sort(buf.begin(), buf.begin() + k, buf.end());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
    for (Index t = 0; t < k; ++t) acc += rows.row(buf[static_cast<std::size_t>(t)].second);
    acc /= static_cast<double>(k);
    if (rule.weighted_average && acc.lpNorm<1>() > 0.0) acc /= acc.lpNorm<1>();
    out.row(i) = acc;
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel
    {
      std::vector<std::pair<double, Index>> buf;
#pragma omp for schedule(static)
      for (Index i = 0; i < m; ++i) body(i, buf);
    }
  } else {
    std::vector<std::pair<double, Index>> buf;
    for (Index i = 0; i < m; ++i) body(i, buf);
  }
  return out;
}

Vector fuse_scores(const LocalWeightSet& weights, const AnchorRule& rule, const ScoreMatrix& scores,
                   const Matrix& features, Exec exec) {
  require(scores.stage != ScoreStage::kRaw, ErrorKind::kInvalidInput, "fusion expects standardized scores");
  require(scores.cols() == weights.dims(), ErrorKind::kInvalidInput, "score columns do not match weight width");
  if (weights.anchor_features.rows() > 0)
    require(features.rows() == scores.rows(), ErrorKind::kInvalidInput, "features do not align with score rows");
  const Matrix w = test_time_weights(weights, rule,
                                     weights.anchor_features.rows() > 0 ? features : Matrix(scores.rows(), 0), exec);
  Vector out(scores.rows());
  for (Index i = 0; i < scores.rows(); ++i) out[i] = scores.values.row(i).dot(w.row(i));
  return out;
}

Vector fuse_scores(const FusionModel& model, const ScoreMatrix& zscored, const Matrix& features) {
  require(!model.learners.empty() && model.weights.weights.rows() > 0, ErrorKind::kInvalidInput, "model is empty");
  return fuse_scores(model.weights, model.anchor_rule, zscored, features);
}

Vector predict(const FusionModel& model, const Matrix& raw_features) {
  model.validate();
  const Matrix x = model.scaler.fitted() ? model.scaler.transform(raw_features) : raw_features;
  ScoreMatrix raw;
  raw.values.resize(x.rows(), static_cast<Index>(model.learners.size()));
  for (std::size_t j = 0; j < model.learners.size(); ++j) {
    raw.values.col(static_cast<Index>(j)) = score_samples(model.learners[j], x);
    raw.learner_ids.emplace_back(to_string(model.learners[j].kind()));
  }
  return fuse_scores(model, apply_zscore(model.normalizer, raw), x);
}

Vector baseline_fuse(const ScoreMatrix& scores, BaselineRule rule, int learner_index) {
  if (rule == BaselineRule::kSum) return scores.values.rowwise().sum();
  require(learner_index >= 0 && learner_index < scores.cols(), ErrorKind::kInvalidInput,
          "single-best learner index " + std::to_string(learner_index) + " out of range");
  return scores.values.col(learner_index);
}

}  // namespace lpfusion
