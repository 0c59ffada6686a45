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
#include <numeric>

#include "../test_util.hpp"
#include "lpfusion/scorespace.hpp"

using namespace lpfusion;
using testutil::rows;

namespace {

ScoreMatrix raw(const Matrix& v) {
  ScoreMatrix s;
  s.values = v;
  for (Index j = 0; j < v.cols(); ++j) s.learner_ids.push_back("l" + std::to_string(j));
  return s;
}

ScoreMatrix zs(const Matrix& v) {
  ScoreMatrix s = raw(v);
  s.stage = ScoreStage::kZscored;
  return s;
}

}  // namespace

TEST_CASE("z-score statistics") {
  const auto st = fit_zscore(raw(rows({{0, 5}, {2, 5}})));
  CHECK(st.mean[0] == 1.0);
  CHECK(st.stddev[0] == 1.0);
  CHECK(st.mean[1] == 5.0);
  CHECK(st.stddev[1] == kStdFloor);
  const auto z = apply_zscore(fit_zscore(raw(rows({{0}, {2}}))), raw(rows({{1}, {3}, {0}})));
  CHECK(z.stage == ScoreStage::kZscored);
  CHECK(z.values(0, 0) == 0.0);
  CHECK(z.values(1, 0) == 2.0);
  CHECK(z.values(2, 0) == -1.0);
}

TEST_CASE("z-scoring the training matrix centres and scales it") {
  const Matrix v = testutil::gaussian(50, 3, 1, 4.0, 7.0);
  const auto st = fit_zscore(raw(v));
  const auto z = apply_zscore(st, raw(v));
  for (Index j = 0; j < 3; ++j) {
    CHECK(std::abs(z.values.col(j).mean()) <= 1e-10);
    CHECK(std::sqrt(z.values.col(j).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto st2 = fit_zscore(raw(z.values));
  CHECK(std::abs(st2.mean[0]) <= 1e-10);
  CHECK(st2.stddev[0] == doctest::Approx(1.0).epsilon(1e-12));
  const auto back = invert_zscore(st, z);
  CHECK((back.values - v).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("z-score errors and stage checks") {
  CHECK_ERROR_KIND(fit_zscore(raw(rows({{1, 2}}))), ErrorKind::kInsufficientData);
  const auto st = fit_zscore(raw(rows({{0}, {2}})));
  CHECK_ERROR_KIND(apply_zscore(st, zs(rows({{1}}))), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(apply_zscore(st, raw(rows({{1, 2}}))), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(trimmed_minmax(fit_trim(st, zs(rows({{0}, {1}})), 5), raw(rows({{1}}))), ErrorKind::kInvalidInput);
}

TEST_CASE("percentile interpolates linearly") {
  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(percentile(v, 5) == doctest::Approx(5.95).epsilon(1e-14));
  CHECK(percentile(v, 0) == 1.0);
  CHECK(percentile(v, 100) == 100.0);
  CHECK_ERROR_KIND(percentile(std::vector<double>{}, 5), ErrorKind::kInsufficientData);
}

TEST_CASE("trimmed min-max endpoints, clipping and midpoint") {
  Matrix u(101, 1);
  for (Index i = 0; i <= 100; ++i) u(i, 0) = static_cast<double>(i);
  NormalizerState st = fit_trim(NormalizerState{}, zs(u), 10);
  CHECK(st.lower[0] == 10.0);
  CHECK(st.upper[0] == 90.0);
  const auto out = trimmed_minmax(st, zs(rows({{10}, {90}, {50}, {-3}, {200}})));
  CHECK(out.stage == ScoreStage::kNormalized);
  CHECK(out.values(0, 0) == 0.0);
  CHECK(out.values(1, 0) == 1.0);
  CHECK(out.values(2, 0) == 0.5);
  CHECK(out.values(3, 0) == 0.0);
  CHECK(out.values(4, 0) == 1.0);
}

TEST_CASE("degenerate quantile gap maps to one half") {
  const NormalizerState st = fit_trim(NormalizerState{}, zs(rows({{2}, {2}, {2}})), 5);
  CHECK(trimmed_minmax(st, zs(rows({{-100}, {2}, {100}}))).values.isConstant(0.5));
}

TEST_CASE("trimmed min-max output stays in [0, 1]") {
  const Matrix train = testutil::gaussian(40, 4, 3);
  const Matrix test = testutil::gaussian(200, 4, 4, 3.0);
  for (int rho = 1; rho <= 10; ++rho) {
    const NormalizerState st = fit_trim(NormalizerState{}, zs(train), rho);
    for (Index j = 0; j < 4; ++j) CHECK(st.lower[j] <= st.upper[j]);
    const auto out = trimmed_minmax(st, zs(test));
    CHECK(out.values.minCoeff() >= 0.0);
    CHECK(out.values.maxCoeff() <= 1.0);
  }
  CHECK_ERROR_KIND(fit_trim(NormalizerState{}, zs(train), 0), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(fit_trim(NormalizerState{}, zs(train), 11), ErrorKind::kInvalidInput);
}

TEST_CASE("pseudo-negatives: counts, negation and provenance") {
  const Matrix v = rows({{1.2, -0.3}, {0.1, 0.2}, {-0.5, 0.9}, {2.0, 1.0}});
  const auto out = generate_pseudo_negatives(zs(v), 0.5, 17);
  CHECK(out.scores.rows() == 6);
  CHECK(std::count(out.labels.begin(), out.labels.end(), 1) == 4);
  CHECK(std::count(out.labels.begin(), out.labels.end(), -1) == 2);
  CHECK(out.scores.values.topRows(4) == v);
  for (Index r = 4; r < 6; ++r) {
    const auto src = static_cast<Index>(out.source[static_cast<std::size_t>(r)]);
    CHECK(out.scores.values.row(r) == -v.row(src));
  }
  CHECK(out.source[4] != out.source[5]);
  const auto again = generate_pseudo_negatives(zs(v), 0.5, 17);
  CHECK(again.scores.values == out.scores.values);
  CHECK(again.source == out.source);
}

TEST_CASE("pseudo-negative selection size is ceil(fraction n)") {
  const Matrix v = testutil::gaussian(7, 2, 9);
  CHECK(generate_pseudo_negatives(zs(v), 0.5, 1).scores.rows() == 7 + 4);
  CHECK(generate_pseudo_negatives(zs(v), 1.0, 1).scores.rows() == 14);
  CHECK(generate_pseudo_negatives(zs(v), 0.01, 1).scores.rows() == 8);
  CHECK_ERROR_KIND(generate_pseudo_negatives(zs(v), 0.0, 1), ErrorKind::kInvalidInput);
  CHECK_ERROR_KIND(generate_pseudo_negatives(raw(v), 0.5, 1), ErrorKind::kInvalidInput);
}

TEST_CASE("pseudo-negative generation leaves the input untouched") {
  const Matrix v = testutil::gaussian(30, 3, 10);
  const ScoreMatrix in = zs(v);
  (void)generate_pseudo_negatives(in, 0.5, 3);
  CHECK(in.values == v);
}
