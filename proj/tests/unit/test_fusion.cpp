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


#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "../oracles.hpp"
#include "../test_util.hpp"
#include "lpfusion/fusion.hpp"

using namespace lpfusion;
using testutil::rows;

namespace {

std::span<const double> sp(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index j = 0;
  for (double x : v) out[j++] = x;
  return out;
}

ScoreMatrix zs(const Matrix& v) {
  ScoreMatrix s;
  s.values = v;
  for (Index j = 0; j < v.cols(); ++j) s.learner_ids.push_back("l" + std::to_string(j));
  s.stage = ScoreStage::kZscored;
  return s;
}

// Random point with ||w||_p = radius.
Vector on_sphere(int d, double p, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector w(d);
  for (int j = 0; j < d; ++j) w[j] = g(rng);
  return w * (radius / lp_norm(sp(w), p));
}

// n x 2 scores where the labels are mostly but not perfectly separable.
struct Instance {
  Matrix s;
  std::vector<int> y;
};

Instance small_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Instance in;
  in.s.resize(20, 2);
  for (int i = 0; i < 20; ++i) {
    const int y = i % 2 ? 1 : -1;
    in.y.push_back(y);
    in.s(i, 0) = 0.8 * y + g(rng);
    in.s(i, 1) = 0.4 * y + g(rng);
  }
  return in;
}

OptimizerConfig shared_config(double p) {
  OptimizerConfig c;
  c.p_base = p;
  c.locality_enabled = false;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Locality

TEST_CASE("locality map") {
  CHECK(locality_p_from_ratio(1.0, 2.0) == doctest::Approx(2.0));
  CHECK(locality_p_from_ratio(0.5, 2.0) == doctest::Approx(3.0));
  CHECK(locality_p_from_ratio(1e12, 2.0) == kMinP);
  CHECK(locality_p_from_ratio(0.0, 2.0) == kMaxP);
  double prev = kMaxP;
  for (double r = 0.1; r < 20.0; r *= 1.3) {
    const double p = locality_p_from_ratio(r, 8.0);
    CHECK(p <= prev);
    prev = p;
  }
  CHECK_ERROR_KIND(locality_p_from_ratio(1.0, 1.0), ErrorKind::kInvalidInput);
}

TEST_CASE("locality index") {
  const Matrix x = rows({{0}, {1}, {2}, {4}, {8}});
  const LocalityIndex idx(x, 1, Exec::kSerial);
  // nearest-neighbour distances 1, 1, 1, 2, 4
  CHECK(idx.training_dispersion()[3] == doctest::Approx(2.0));
  CHECK(idx.median_dispersion() == doctest::Approx(1.0));
  const Vector p = idx.training_p(2.0);
  CHECK(p[0] == doctest::Approx(2.0));
  CHECK(p[3] == doctest::Approx(1.5));
  CHECK(p[4] == doctest::Approx(1.25));
  const double q[] = {8.5};
  CHECK(idx.dispersion(q) == doctest::Approx(0.5));
  CHECK(locality_p(q, x, 2.0, 1) == doctest::Approx(3.0));
  CHECK_ERROR_KIND(LocalityIndex(x, 5), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(LocalityIndex(x, 0), ErrorKind::kInvalidInput);
}

TEST_CASE("locality index is independent of execution mode") {
  const Matrix x = testutil::gaussian(300, 4, 11);
  const LocalityIndex a(x, 7, Exec::kSerial), b(x, 7, Exec::kParallel);
  CHECK(a.training_dispersion() == b.training_dispersion());
  CHECK(a.median_dispersion() == b.median_dispersion());
}

// ---------------------------------------------------------------------------
// Objective pieces

TEST_CASE("hinge examples") {
  auto t = hinge_loss_and_grad(sp(vec({1, 1})), 1, sp(vec({1, 1})));
  CHECK(t.loss == 0.0);
  CHECK(t.grad.isZero());
  t = hinge_loss_and_grad(sp(vec({1, 0})), 1, sp(vec({0, 0})));
  CHECK(t.loss == 1.0);
  CHECK(t.grad[0] == -1.0);
  CHECK(t.grad[1] == 0.0);
  t = hinge_loss_and_grad(sp(vec({0.5, 0.5})), 1, sp(vec({1, 1})));
  CHECK(t.loss == 0.0);
  CHECK(t.grad.isZero());
  t = hinge_loss_and_grad(sp(vec({2, -1})), -1, sp(vec({0.25, 0.5})));
  CHECK(t.loss == doctest::Approx(1.0));
  CHECK(t.grad[0] == 2.0);
  CHECK(t.grad[1] == -1.0);
  CHECK_ERROR_KIND(hinge_loss_and_grad(sp(vec({1})), 0, sp(vec({1}))), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(hinge_loss_and_grad(sp(vec({1, 2})), 1, sp(vec({1}))), ErrorKind::kInvalidInput);
}

TEST_CASE("barrier examples") {
  CHECK(barrier_grad(sp(vec({0, 0, 0})), 4.0, 10.0).isZero());
  const Vector g = barrier_grad(sp(vec({0.5, 0})), 2.0, 1.0);
  CHECK(g[0] == doctest::Approx(4.0 / 3.0));
  CHECK(g[1] == 0.0);
  CHECK(barrier_value(sp(vec({0.5, 0})), 2.0, 1.0) == doctest::Approx(-std::log(0.75)));
  CHECK(barrier_grad(sp(vec({-0.5, 0})), 2.0, 1.0)[0] == doctest::Approx(-4.0 / 3.0));
  double prev = 0.0;
  for (double r : {0.9, 0.99, 0.999, 0.9999}) {
    const double mag = barrier_grad(sp(vec({r})), 3.0, 1.0).norm();
    CHECK(mag > prev);
    prev = mag;
  }
  CHECK(prev > 1e3);
  CHECK(std::isinf(barrier_value(sp(vec({0.6, 0.8})), 2.0, 1.0)));
  CHECK_ERROR_KIND(barrier_grad(sp(vec({0.6, 0.8})), 2.0, 1.0), ErrorKind::kInfeasiblePoint);
  CHECK_ERROR_KIND(barrier_grad(sp(vec({2.0})), 2.0, 1.0), ErrorKind::kInfeasiblePoint);
}

TEST_CASE("barrier gradient matches finite differences on every grid p") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> radius(0.05, 0.9);
  for (double p : kPGrid) {
    for (int k = 0; k < 20; ++k) {
      const Vector w = on_sphere(1 + k % 4, p, radius(rng), rng);
      const Vector g = barrier_grad(sp(w), p, 0.7);
      const Vector fd = oracle::central_gradient(
          [&](const Vector& v) { return -0.7 * std::log1p(-std::pow(oracle::lp_norm(v, p), p)); }, w, 1e-7);
      CHECK_MESSAGE((g - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()), "p = " << p);
    }
  }
}

TEST_CASE("hinge subgradient matches finite differences away from the kink") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  int checked = 0;
  for (int k = 0; k < 100; ++k) {
    Vector s(3), w(3);
    for (int j = 0; j < 3; ++j) {
      s[j] = g(rng);
      w[j] = 0.5 * g(rng);
    }
    const int y = k % 2 ? 1 : -1;
    if (std::abs(1.0 - y * s.dot(w)) <= 1e-3) continue;
    ++checked;
    const Vector fd = oracle::central_gradient(
        [&](const Vector& v) { return std::max(0.0, 1.0 - y * s.dot(v)); }, w, 1e-7);
    CHECK((hinge_loss_and_grad(sp(s), y, sp(w)).grad - fd).norm() <= 1e-6);
  }
  CHECK(checked > 90);
}

TEST_CASE("radial projection") {
  CHECK(project_lp_ball(sp(vec({0.3, 0.4})), 2.0) == vec({0.3, 0.4}));
  const Vector a = project_lp_ball(sp(vec({3, 4})), 2.0);
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(a[1] == doctest::Approx(0.8));
  const Vector b = project_lp_ball(sp(vec({2, 2})), 100.0);
  CHECK(b[0] == doctest::Approx(2.0 / lp_norm(sp(vec({2, 2})), 100.0)));
  CHECK(b[0] == b[1]);
  CHECK(lp_norm(sp(b), 100.0) <= 1.0);
  CHECK(lp_norm(sp(b), 100.0) == doctest::Approx(1.0));
}

TEST_CASE("radial projection stays in the ball and matches the Euclidean projection for p = 2") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> radius(0.1, 40.0);
  for (double p : kPGrid)
    for (int k = 0; k < 30; ++k) {
      const Vector w = on_sphere(1 + k % 4, p, radius(rng), rng);
      CHECK(lp_norm(sp(project_lp_ball(sp(w), p)), p) <= 1.0 + 1e-12);
    }
  for (int k = 0; k < 30; ++k) {
    const Vector w = on_sphere(1 + k % 4, 2.0, 1.0 + radius(rng), rng);
    CHECK((project_lp_ball(sp(w), 2.0) - oracle::euclidean_project_l2(w)).norm() <= 1e-9);
  }
}

TEST_CASE("norms") {
  CHECK(lp_norm(sp(vec({3, -4})), 2.0) == doctest::Approx(5.0));
  CHECK(lp_norm_pow(sp(vec({3, -4})), 2.0) == doctest::Approx(25.0));
  CHECK(lp_norm(sp(vec({0, 0})), 4.0) == 0.0);
  // no overflow for large p
  CHECK(lp_norm(sp(vec({1e3, 1e3})), 100.0) == doctest::Approx(1e3 * std::pow(2.0, 0.01)));
}

// ---------------------------------------------------------------------------
// Linear minimization oracle

TEST_CASE("lp ball vertex") {
  CHECK(lp_ball_vertex(sp(vec({-3})), 2.0)[0] == doctest::Approx(1.0));
  CHECK(lp_ball_vertex(sp(vec({0.2})), 8.0)[0] == doctest::Approx(-1.0));
  CHECK(lp_ball_vertex(sp(vec({0, 0})), 2.0).isZero());
  const Vector v = lp_ball_vertex(sp(vec({3, -4})), 2.0);
  CHECK(v[0] == doctest::Approx(-0.6));
  CHECK(v[1] == doctest::Approx(0.8));

  std::mt19937_64 rng(8);
  for (double p : kPGrid) {
    const Vector g = on_sphere(3, 2.0, 1.0, rng);
    const Vector vert = lp_ball_vertex(sp(g), p);
    CHECK(lp_norm(sp(vert), p) == doctest::Approx(1.0).epsilon(1e-9));
    const double q = p / (p - 1.0);
    CHECK(g.dot(vert) == doctest::Approx(-oracle::lp_norm(g, q)).epsilon(1e-9));
    for (int k = 0; k < 50; ++k) CHECK(g.dot(on_sphere(3, p, 1.0, rng)) >= g.dot(vert) - 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Optimizers

TEST_CASE("interior point in one dimension approaches the boundary") {
  OptimizerConfig c = shared_config(2.0);
  c.tolerance = 1e-10;
  const auto r = optimize_interior_point(zs(rows({{0.5}, {0.4}, {0.3}})), Matrix(), std::vector<int>{1, 1, 1}, c);
  const double w = r.weights.weights(0, 0);
  CHECK(w < 1.0);
  CHECK(w > 0.99);
  CHECK(r.weights.shared());
}

TEST_CASE("identical learners receive identical weights") {
  Matrix s(30, 2);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  std::vector<int> y;
  for (int i = 0; i < 30; ++i) {
    y.push_back(i % 3 ? 1 : -1);
    s(i, 0) = s(i, 1) = 0.5 * y.back() + g(rng);
  }
  const auto ip = optimize_interior_point(zs(s), Matrix(), y, shared_config(2.0));
  CHECK(ip.weights.weights(0, 0) == doctest::Approx(ip.weights.weights(0, 1)).epsilon(1e-6));
  const auto fw = optimize_frank_wolfe(zs(s), y, 2.0, shared_config(2.0));
  CHECK(fw.weights[0] == doctest::Approx(fw.weights[1]).epsilon(1e-6));
}

TEST_CASE("frank-wolfe in one dimension lands on a vertex") {
  OptimizerConfig c = shared_config(2.0);
  c.max_epochs = 1;
  const auto up = optimize_frank_wolfe(zs(rows({{0.5}, {0.2}})), std::vector<int>{1, 1}, 2.0, c);
  CHECK(std::abs(up.weights[0]) == doctest::Approx(1.0));
  const auto down = optimize_frank_wolfe(zs(rows({{0.5}, {0.2}})), std::vector<int>{-1, -1}, 2.0, c);
  CHECK(down.weights[0] == doctest::Approx(-1.0));
}

TEST_CASE("both optimizers get close to the brute-force optimum on small instances") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Instance in = small_instance(seed);
    for (double p : {2.0, 4.0 / 3.0}) {
      const double best = oracle::brute_force_disk(in.s, in.y, p, 0.01);
      OptimizerConfig c = shared_config(p);
      c.max_epochs = 2000;
      c.tolerance = 1e-9;
      const auto ip = optimize_interior_point(zs(in.s), Matrix(), in.y, c);
      const Vector wip = ip.weights.weights.row(0).transpose();
      const auto fw = optimize_frank_wolfe(zs(in.s), in.y, p, c);
      CHECK(oracle::total_hinge(in.s, in.y, wip) <= best * 1.02 + 1e-9);
      CHECK(fw.objective <= best * 1.02 + 1e-9);
      CHECK(fw.objective == doctest::Approx(oracle::total_hinge(in.s, in.y, fw.weights)));
    }
  }
}

TEST_CASE("every epoch keeps each row inside its own ball") {
  const Matrix x = testutil::gaussian(60, 3, 10);
  Matrix s(60, 3);
  std::vector<int> y(60);
  for (int i = 0; i < 60; ++i) {
    y[static_cast<std::size_t>(i)] = i % 4 ? 1 : -1;
    for (int j = 0; j < 3; ++j) s(i, j) = x(i, j) + 0.3 * y[static_cast<std::size_t>(i)];
  }
  for (double p : kPGrid) {
    OptimizerConfig c;
    c.p_base = p;
    c.locality_k = 5;
    int epochs = 0;
    const auto r = optimize_interior_point(zs(s), x, y, c, Exec::kSerial, [&](const EpochReport& e) {
      ++epochs;
      CHECK(e.weights->max_norm() <= 1.0 + kFeasibilitySlack);
      for (Index i = 0; i < e.weights->local_p.size(); ++i) {
        CHECK(e.weights->local_p[i] >= kMinP);
        CHECK(e.weights->local_p[i] <= kMaxP);
      }
    });
    CHECK(epochs == r.epochs);
    CHECK(r.weights.weights.rows() == 60);
    CHECK(r.weights.anchor_features == x);
    CHECK_NOTHROW(r.weights.validate());
  }
}

TEST_CASE("interior-point objective never increases") {
  const Matrix x = testutil::gaussian(40, 2, 12);
  Matrix s = testutil::gaussian(40, 3, 13);
  std::vector<int> y(40, 1);
  for (bool local : {true, false}) {
    OptimizerConfig c;
    c.p_base = 4.0;
    c.locality_enabled = local;
    c.locality_k = 5;
    c.tolerance = 1e-12;
    double prev = std::numeric_limits<double>::infinity();
    optimize_interior_point(zs(s), x, y, c, Exec::kSerial, [&](const EpochReport& e) {
      CHECK(e.objective <= prev + 1e-12);
      prev = e.objective;
    });
  }
}

TEST_CASE("barrier steps do not flip signs on nonnegative scores") {
  Matrix s = testutil::gaussian(50, 4, 14).cwiseAbs();
  const Matrix x = testutil::gaussian(50, 2, 15);
  OptimizerConfig c;
  c.p_base = 100.0;
  c.locality_k = 5;
  const auto r = optimize_interior_point(zs(s), x, std::vector<int>(50, 1), c);
  CHECK((r.weights.weights.array() > 0.0).all());
}

TEST_CASE("a misleading learner ends up with a negative weight") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  Matrix s(60, 2);
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    y.push_back(i % 2 ? 1 : -1);
    s(i, 0) = 0.8 * y.back() + g(rng);
    s(i, 1) = -0.8 * y.back() + g(rng);
  }
  for (double p : {2.0, 8.0}) {
    OptimizerConfig c = shared_config(p);
    c.beta = 0.9;
    const auto ip = optimize_interior_point(zs(s), Matrix(), y, c);
    const auto fw = optimize_frank_wolfe(zs(s), y, p, c);
    CHECK(ip.weights.weights(0, 0) > 0.2);
    CHECK(ip.weights.weights(0, 1) < -0.2);
    CHECK(fw.weights[1] < -0.2);
    const Vector w = ip.weights.weights.row(0).transpose();
    CHECK(oracle::total_hinge(s, y, w) <= oracle::brute_force_disk(s, y, p, 0.01) * 1.02);
  }
}

TEST_CASE("serial and parallel interior point agree bit for bit") {
  const Matrix x = testutil::gaussian(200, 3, 16);
  const Matrix s = testutil::gaussian(200, 4, 17);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) y[static_cast<std::size_t>(i)] = i % 5 ? 1 : -1;
  OptimizerConfig c;
  c.p_base = 8.0 / 7.0;
  const auto a = optimize_interior_point(zs(s), x, y, c, Exec::kSerial);
  const auto b = optimize_interior_point(zs(s), x, y, c, Exec::kParallel);
  CHECK(a.weights.weights == b.weights.weights);
  CHECK(a.weights.local_p == b.weights.local_p);
  CHECK(a.objective == b.objective);
  CHECK(a.epochs == b.epochs);
}

TEST_CASE("optimizer input errors") {
  const ScoreMatrix s = zs(rows({{1, 2}, {3, 4}}));
  const std::vector<int> y{1, 1};
  CHECK_ERROR_KIND(optimize_interior_point(s, Matrix(), std::vector<int>{1}, shared_config(2.0)),
                   ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(optimize_interior_point(s, Matrix(), std::vector<int>{1, 0}, shared_config(2.0)),
                   ErrorKind::kInvalidInput);
  OptimizerConfig local;
  CHECK_ERROR_KIND(optimize_interior_point(s, rows({{0}}), y, local), ErrorKind::kInvalidInput);
  ScoreMatrix raw = s;
  raw.stage = ScoreStage::kRaw;
  CHECK_ERROR_KIND(optimize_interior_point(raw, Matrix(), y, shared_config(2.0)), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(optimize_frank_wolfe(s, y, 1.0, shared_config(2.0)), ErrorKind::kInvalidInput);
  OptimizerConfig bad = shared_config(2.0);
  bad.beta = 1.0;
  CHECK_ERROR_KIND(optimize_interior_point(s, Matrix(), y, bad), ErrorKind::kInvalidInput);
  bad = shared_config(2.0);
  bad.mu0 = 0.0;
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::kInvalidInput);
  bad = shared_config(2.0);
  bad.tolerance = 0.0;
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::kInvalidInput);
  bad = shared_config(0.5);
  CHECK_ERROR_KIND(bad.validate(), ErrorKind::kInvalidInput);
}

TEST_CASE("weight set validation") {
  LocalWeightSet ws = shared_weights(sp(vec({0.5, 0.5})), 2.0);
  CHECK(ws.shared());
  CHECK_NOTHROW(ws.validate());
  ws.weights(0, 0) = 2.0;
  CHECK_ERROR_KIND(ws.validate(), ErrorKind::kInvalidInput);
  ws = shared_weights(sp(vec({0.5, 0.5})), 200.0);
  CHECK_ERROR_KIND(ws.validate(), ErrorKind::kInvalidInput);
  ws = shared_weights(sp(vec({0.5, 0.5})), 2.0);
  ws.weights.conservativeResize(2, 2);
  ws.weights.row(1) = ws.weights.row(0);
  ws.local_p = vec({2, 2});
  CHECK_ERROR_KIND(ws.validate(), ErrorKind::kInvalidInput);
}

// ---------------------------------------------------------------------------
// Deployment

TEST_CASE("fused score examples") {
  LocalWeightSet ws;
  ws.weights = rows({{1, 0}, {0, 1}});
  ws.local_p = vec({2, 2});
  ws.anchor_features = rows({{0, 0}, {10, 10}});
  const AnchorRule exact{1, false, false};
  const Vector f = fuse_scores(ws, exact, zs(rows({{0.7, -3}, {0.7, -3}})), rows({{0, 0}, {9, 9}}));
  CHECK(f[0] == 0.7);
  CHECK(f[1] == -3.0);
  const Matrix w = test_time_weights(ws, exact, rows({{10, 10}}));
  CHECK(w.row(0) == ws.weights.row(1));

  const LocalWeightSet shared = shared_weights(sp(vec({1, 0})), 2.0);
  CHECK(fuse_scores(shared, exact, zs(rows({{0.7, -3}})), Matrix(1, 0))[0] == 0.7);
}

TEST_CASE("uniform weights rank like the sum rule") {
  const Matrix s = testutil::gaussian(50, 3, 18);
  const Matrix x = testutil::gaussian(50, 2, 19);
  LocalWeightSet ws;
  const double u = 1.0 / std::pow(3.0, 1.0 / 4.0);
  ws.weights = Matrix::Constant(50, 3, u);
  ws.local_p = Vector::Constant(50, 4.0);
  ws.anchor_features = x;
  const Vector fused = fuse_scores(ws, AnchorRule{}, zs(s), testutil::gaussian(50, 2, 20));
  const Vector sum = baseline_fuse(zs(s), BaselineRule::kSum);
  for (Index i = 0; i < 50; ++i) CHECK(fused[i] == doctest::Approx(u * sum[i]));
}

TEST_CASE("anchor averaging") {
  LocalWeightSet ws;
  ws.weights = rows({{0.5, 0}, {0, 0.25}, {0.1, 0.1}});
  ws.local_p = vec({2, 2, 2});
  ws.anchor_features = rows({{0}, {1}, {10}});
  const Matrix q = rows({{0.2}});
  CHECK(test_time_weights(ws, AnchorRule{2, false, false}, q).row(0).isApprox(Eigen::RowVector2d(0.25, 0.125)));
  CHECK(test_time_weights(ws, AnchorRule{2, true, false}, q).row(0).isApprox(Eigen::RowVector2d(0.5, 0.5)));
  CHECK(test_time_weights(ws, AnchorRule{2, false, true}, q).row(0).isApprox(Eigen::RowVector2d(2.0 / 3, 1.0 / 3)));
  CHECK(test_time_weights(ws, AnchorRule{50, false, false}, q).row(0).isApprox(Eigen::RowVector2d(0.2, 0.35 / 3)));

  const AnchorRule frac{2, false, false, 0.25};
  CHECK(frac.neighbors_for(3) == 2);
  CHECK(frac.neighbors_for(40) == 10);
  CHECK(frac.neighbors_for(41) == 11);
  CHECK(AnchorRule{5, false, false, 1.0}.neighbors_for(3) == 3);
  CHECK_ERROR_KIND(test_time_weights(ws, AnchorRule{}, rows({{0, 1}})), ErrorKind::kInvalidInput);
}

TEST_CASE("serial and parallel test-time weights agree") {
  LocalWeightSet ws;
  ws.weights = testutil::gaussian(300, 4, 21) * 0.1;
  ws.local_p = Vector::Constant(300, 2.0);
  ws.anchor_features = testutil::gaussian(300, 3, 22);
  const Matrix q = testutil::gaussian(500, 3, 23);
  const AnchorRule rule{10, true, true, 0.0};
  CHECK(test_time_weights(ws, rule, q, Exec::kSerial) == test_time_weights(ws, rule, q, Exec::kParallel));
}

TEST_CASE("fusion input checks") {
  LocalWeightSet ws = shared_weights(sp(vec({0.5, 0.5})), 2.0);
  ScoreMatrix raw = zs(rows({{1, 2}}));
  raw.stage = ScoreStage::kRaw;
  CHECK_ERROR_KIND(fuse_scores(ws, AnchorRule{}, raw, Matrix(1, 0)), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(fuse_scores(ws, AnchorRule{}, zs(rows({{1, 2, 3}})), Matrix(1, 0)), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(test_time_weights(LocalWeightSet{}, AnchorRule{}, Matrix(1, 0)), ErrorKind::kInvalidInput);
}

TEST_CASE("baseline rules") {
  CHECK(baseline_fuse(zs(rows({{0.2, 0.4}})), BaselineRule::kSum)[0] == doctest::Approx(0.6));
  CHECK(baseline_fuse(zs(rows({{0.9, 0.1}})), BaselineRule::kSingleBest, 0)[0] == 0.9);
  CHECK_ERROR_KIND(baseline_fuse(zs(rows({{0.9, 0.1}})), BaselineRule::kSingleBest, 2), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(baseline_fuse(zs(rows({{0.9, 0.1}})), BaselineRule::kSingleBest, -1), ErrorKind::kInvalidInput);
  const Matrix s = testutil::gaussian(20, 3, 24);
  Matrix perm(20, 3);
  perm << s.col(2), s.col(0), s.col(1);
  const Vector a = baseline_fuse(zs(s), BaselineRule::kSum), b = baseline_fuse(zs(perm), BaselineRule::kSum);
  for (Index i = 0; i < 20; ++i) CHECK(a[i] == doctest::Approx(b[i]));
}

TEST_CASE("mode and optimizer names") {
  for (FusionMode m : {FusionMode::kPureRpau, FusionMode::kPurePseudoneg, FusionMode::kNonpure})
    CHECK(fusion_mode_from_string(to_string(m)) == m);
  for (OptimizerKind k : {OptimizerKind::kInteriorPoint, OptimizerKind::kFrankWolfe})
    CHECK(optimizer_kind_from_string(to_string(k)) == k);
  CHECK_ERROR_KIND(fusion_mode_from_string("mixed"), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(optimizer_kind_from_string("newton"), ErrorKind::kInvalidInput);
}

TEST_CASE("fusing is linear in the number of samples") {
  LocalWeightSet ws;
  ws.weights = Matrix::Constant(200, 4, 0.3);
  ws.local_p = Vector::Constant(200, 2.0);
  ws.anchor_features = testutil::gaussian(200, 3, 26);
  auto best_time = [&](int m) {
    const ScoreMatrix s = zs(testutil::gaussian(m, 4, 25));
    const Matrix x = testutil::gaussian(m, 3, 27);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 5; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const Vector f = fuse_scores(ws, AnchorRule{1, false, false}, s, x, Exec::kSerial);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      CHECK(f.size() == m);
    }
    return best;
  };
  const double small = best_time(4000), large = best_time(8000);
  CHECK(large <= 2.5 * small);
}
