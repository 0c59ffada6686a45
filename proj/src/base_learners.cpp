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


#include "lpfusion/base_learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "lpfusion/error.hpp"
#include "lpfusion/log.hpp"

namespace lpfusion {

std::string_view to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::kSvdd: return "svdd";
    case LearnerKind::kOcgp: return "ocgp";
    case LearnerKind::kKpca: return "kpca";
    case LearnerKind::kGmm: return "gmm";
  }
  return "unknown";
}

LearnerKind learner_kind_from_string(std::string_view name) {
  for (LearnerKind k : kAllLearners)
    if (to_string(k) == name) return k;
  fail(ErrorKind::kInvalidInput, "unknown learner '" + std::string(name) + "'");
}

BaseLearnerSpec BaseLearnerSpec::svdd(KernelSpec kernel) {
  BaseLearnerSpec s;
  s.kind = LearnerKind::kSvdd;
  s.kernel = kernel;
  return s;
}

BaseLearnerSpec BaseLearnerSpec::ocgp(KernelSpec kernel) {
  BaseLearnerSpec s;
  s.kind = LearnerKind::kOcgp;
  s.kernel = kernel;
  return s;
}

BaseLearnerSpec BaseLearnerSpec::kpca(KernelSpec kernel, int subspace_dim) {
  BaseLearnerSpec s;
  s.kind = LearnerKind::kKpca;
  s.kernel = kernel;
  s.kpca_subspace_dim = subspace_dim;
  return s;
}

BaseLearnerSpec BaseLearnerSpec::gmm(int components, std::uint64_t seed) {
  BaseLearnerSpec s;
  s.kind = LearnerKind::kGmm;
  s.gmm_components = components;
  s.seed = seed;
  return s;
}

void BaseLearnerSpec::validate() const {
  const bool kernel_kind = kind != LearnerKind::kGmm;
  require(kernel.has_value() == kernel_kind, ErrorKind::kInvalidInput,
          std::string(to_string(kind)) + (kernel_kind ? " requires a kernel" : " takes no kernel"));
  if (kernel) require(kernel->width > 0.0 && std::isfinite(kernel->width), ErrorKind::kInvalidInput,
                      "kernel width must be positive");
  require(kpca_subspace_dim.has_value() == (kind == LearnerKind::kKpca), ErrorKind::kInvalidInput,
          "kpca_subspace_dim is set exactly for kpca");
  if (kpca_subspace_dim) require(*kpca_subspace_dim >= 1, ErrorKind::kInvalidInput, "kpca_subspace_dim must be >= 1");
  require(gmm_components.has_value() == (kind == LearnerKind::kGmm), ErrorKind::kInvalidInput,
          "gmm_components is set exactly for gmm");
  if (gmm_components) require(*gmm_components >= 1, ErrorKind::kInvalidInput, "gmm_components must be >= 1");
}

Index BaseLearnerModel::feature_dim() const {
  return std::visit(
      [](const auto& m) -> Index {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SvddModel>) return m.support.cols();
        else if constexpr (std::is_same_v<T, GmmModel>) return m.means.cols();
        else return m.train.cols();
      },
      state);
}

// ---------------------------------------------------------------------------
// SVDD

SimplexSolution solve_min_enclosing_ball(const Matrix& gram, double tolerance, int max_iterations,
                                         const std::function<void(const Vector&)>& observer) {
  const Index n = gram.rows();
  require(n >= 1 && gram.cols() == n, ErrorKind::kInvalidInput, "gram matrix must be square and non-empty");
  SimplexSolution sol;
  sol.alpha = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector ka = gram * sol.alpha;
  double aka = sol.alpha.dot(ka);
  if (observer) observer(sol.alpha);

  for (int it = 0; it < max_iterations; ++it) {
    // gradient 2 K a - diag(K)
    Index j = 0;
    double gj = std::numeric_limits<double>::infinity();
    double ga = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double g = 2.0 * ka[i] - gram(i, i);
      ga += g * sol.alpha[i];
      if (g < gj) {
        gj = g;
        j = i;
      }
    }
    sol.gap = ga - gj;
    if (sol.gap <= tolerance) break;
    const double curv = gram(j, j) - 2.0 * ka[j] + aka;
    double step = curv > 0.0 ? sol.gap / (2.0 * curv) : 1.0;
    step = std::clamp(step, 0.0, 1.0);
    aka = (1.0 - step) * (1.0 - step) * aka + 2.0 * step * (1.0 - step) * ka[j] + step * step * gram(j, j);
    for (Index i = 0; i < n; ++i) ka[i] = (1.0 - step) * ka[i] + step * gram(i, j);
    sol.alpha *= (1.0 - step);
    sol.alpha[j] += step;
    ++sol.iterations;
    if (observer) observer(sol.alpha);
  }
  return sol;
}

namespace {

SvddModel fit_svdd(const KernelSpec& kernel, const Matrix& x) {
  const Matrix gram = rbf_gram_matrix(x, kernel);
  SimplexSolution sol = solve_min_enclosing_ball(gram, kSvddTolerance, kSvddMaxIterations);
  SvddModel m;
  m.kernel = kernel;
  m.support = x;
  m.alpha = std::move(sol.alpha);
  m.center_norm = m.alpha.dot(gram * m.alpha);
  m.iterations = sol.iterations;
  return m;
}

Vector score_svdd(const SvddModel& m, const Matrix& x) {
  const Matrix k = rbf_kernel_matrix(x, m.support, m.kernel);
  Vector s = k * m.alpha;
  for (Index i = 0; i < s.size(); ++i) s[i] = -(1.0 - 2.0 * s[i] + m.center_norm);
  return s;
}

// ---------------------------------------------------------------------------
// OCGP

OcgpModel fit_ocgp(const KernelSpec& kernel, const Matrix& x) {
  const Index n = x.rows();
  const Eigen::MatrixXd gram = rbf_gram_matrix(x, kernel);
  double jitter = kOcgpJitter;
  for (int attempt = 0; attempt < 5; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd reg = gram;
    reg.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(reg);
    if (llt.info() != Eigen::Success) {
      log::warning("ocgp: kernel matrix not positive definite at jitter " + std::to_string(jitter) + ", retrying");
      continue;
    }
    OcgpModel m;
    m.kernel = kernel;
    m.train = x;
    m.coef = llt.solve(Eigen::VectorXd::Ones(n));
    m.jitter = jitter;
    if (m.coef.allFinite()) return m;
  }
  fail(ErrorKind::kNumericalFailure, "ocgp: kernel matrix could not be regularized");
}

Vector score_ocgp(const OcgpModel& m, const Matrix& x) {
  return rbf_kernel_matrix(x, m.train, m.kernel) * m.coef;
}

// ---------------------------------------------------------------------------
// KPCA

KpcaModel fit_kpca(const KernelSpec& kernel, const Matrix& x, int dim) {
  const Index n = x.rows();
  require(dim <= n, ErrorKind::kInvalidInput,
          "kpca_subspace_dim " + std::to_string(dim) + " exceeds training size " + std::to_string(n));
  const Matrix gram = rbf_gram_matrix(x, kernel);
  KpcaModel m;
  m.kernel = kernel;
  m.train = x;
  m.kernel_row_means = gram.rowwise().mean();
  m.kernel_mean = m.kernel_row_means.mean();
  Eigen::MatrixXd centered(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      centered(i, j) = gram(i, j) - m.kernel_row_means[i] - m.kernel_row_means[j] + m.kernel_mean;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(centered);
  require(eig.info() == Eigen::Success, ErrorKind::kNumericalFailure, "kpca: eigendecomposition failed");
  // ascending -> take from the back
  Index keep = 0;
  for (Index l = n - 1; l >= 0 && keep < dim; --l, ++keep)
    if (!(eig.eigenvalues()[l] > kKpcaEigenFloor)) break;
  m.eigenvalues.resize(keep);
  m.components.resize(n, keep);
  for (Index c = 0; c < keep; ++c) {
    const Index l = n - 1 - c;
    const double lambda = eig.eigenvalues()[l];
    m.eigenvalues[c] = lambda;
    m.components.col(c) = eig.eigenvectors().col(l) / std::sqrt(lambda);
  }
  return m;
}

Vector score_kpca(const KpcaModel& m, const Matrix& x) {
  const Matrix k = rbf_kernel_matrix(x, m.train, m.kernel);
  const Index n = m.train.rows();
  Vector out(x.rows());
  Eigen::RowVectorXd kc(n);
  for (Index i = 0; i < x.rows(); ++i) {
    const double row_mean = k.row(i).mean();
    for (Index j = 0; j < n; ++j) kc[j] = k(i, j) - row_mean - m.kernel_row_means[j] + m.kernel_mean;
    const double norm = 1.0 - 2.0 * row_mean + m.kernel_mean;
    const double proj = m.components.cols() > 0 ? (kc * m.components).squaredNorm() : 0.0;
    out[i] = -(norm - proj);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GMM

double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((v.array() - mx).exp().sum());
}

Eigen::MatrixXd gmm_log_densities(const GmmModel& m, const Matrix& x) {
  const Index c = m.weights.size();
  Eigen::MatrixXd out(x.rows(), c);
  Eigen::VectorXd diff(x.cols());
  for (Index k = 0; k < c; ++k) {
    const double lw = m.weights[k] > 0.0 ? std::log(m.weights[k]) : -std::numeric_limits<double>::infinity();
    const auto& llt = m.factors[static_cast<std::size_t>(k)];
    for (Index i = 0; i < x.rows(); ++i) {
      diff = (x.row(i) - m.means.row(k)).transpose();
      llt.matrixL().solveInPlace(diff);
      out(i, k) = lw + m.log_norms[static_cast<std::size_t>(k)] - 0.5 * diff.squaredNorm();
    }
  }
  return out;
}

std::vector<Index> kmeanspp_seeds(const Matrix& x, int c, std::mt19937_64& rng) {
  const Index n = x.rows();
  std::vector<Index> seeds;
  std::uniform_int_distribution<Index> first(0, n - 1);
  seeds.push_back(first(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2[i] = squared_distance(row_span(x, i), row_span(x, seeds[0]));
  while (static_cast<int>(seeds.size()) < c) {
    const double total = d2.sum();
    Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng), acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = first(rng);
    }
    seeds.push_back(pick);
    for (Index i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], squared_distance(row_span(x, i), row_span(x, pick)));
  }
  return seeds;
}

GmmModel fit_gmm(int components, std::uint64_t seed, const Matrix& x) {
  const Index n = x.rows(), f = x.cols();
  require(n >= components, ErrorKind::kInsufficientData,
          "gmm: " + std::to_string(components) + " components need at least as many rows");
  const Eigen::RowVectorXd grand_mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - grand_mean;
  Eigen::MatrixXd total_cov = centered.transpose() * centered / static_cast<double>(n);
  double ridge = kGmmRidgeScale * total_cov.trace() / static_cast<double>(f);
  if (!(ridge > 0.0)) ridge = kGmmRidgeScale;

  GmmModel m;
  m.ridge = ridge;
  std::mt19937_64 rng(seed);
  const auto seeds = kmeanspp_seeds(x, components, rng);
  m.weights = Eigen::VectorXd::Constant(components, 1.0 / components);
  m.means.resize(components, f);
  for (int k = 0; k < components; ++k) m.means.row(k) = x.row(seeds[static_cast<std::size_t>(k)]);
  Eigen::MatrixXd init_cov = total_cov;
  init_cov.diagonal().array() += ridge;
  m.covariances.assign(static_cast<std::size_t>(components), init_cov);
  m.prepare();

  double prev_ll = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd resp(n, components);
  for (int it = 0; it < kGmmMaxIterations; ++it) {
    resp = gmm_log_densities(m, x);
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double lse = log_sum_exp(resp.row(i).transpose());
      require(std::isfinite(lse), ErrorKind::kNumericalFailure, "gmm: non-finite log-likelihood");
      ll += lse;
      resp.row(i) = (resp.row(i).array() - lse).exp();
    }
    ll /= static_cast<double>(n);
    m.iterations = it + 1;

    for (int k = 0; k < components; ++k) {
      const double nk = resp.col(k).sum();
      if (nk < 1e-10) continue;  // starved component keeps its parameters
      m.weights[k] = nk / static_cast<double>(n);
      Eigen::RowVectorXd mu = (resp.col(k).transpose() * x) / nk;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(f, f);
      for (Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd d = x.row(i) - mu;
        cov.noalias() += resp(i, k) * d.transpose() * d;
      }
      cov /= nk;
      cov.diagonal().array() += ridge;
      m.means.row(k) = mu;
      m.covariances[static_cast<std::size_t>(k)] = 0.5 * (cov + cov.transpose());
    }
    m.weights /= m.weights.sum();
    m.prepare();
    if (std::abs(ll - prev_ll) < kGmmTolerance) break;
    prev_ll = ll;
  }
  return m;
}

Vector score_gmm(const GmmModel& m, const Matrix& x) {
  const Eigen::MatrixXd ld = gmm_log_densities(m, x);
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out[i] = log_sum_exp(ld.row(i).transpose());
  return out;
}

}  // namespace

void GmmModel::prepare() {
  factors.clear();
  log_norms.clear();
  const double f = static_cast<double>(means.cols());
  for (const auto& cov : covariances) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    require(llt.info() == Eigen::Success, ErrorKind::kNumericalFailure, "gmm: covariance is not positive definite");
    const double half_logdet = llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norms.push_back(-0.5 * f * std::log(2.0 * std::numbers::pi) - half_logdet);
    factors.push_back(std::move(llt));
  }
}

// ---------------------------------------------------------------------------

BaseLearnerModel fit_base_learner(const BaseLearnerSpec& spec, const Matrix& x_train) {
  spec.validate();
  require(x_train.rows() >= 2, ErrorKind::kInsufficientData, "base learners need at least 2 training rows");
  require(x_train.cols() >= 1, ErrorKind::kInvalidInput, "training data has no features");
  require(x_train.allFinite(), ErrorKind::kInvalidInput, "training data contains non-finite values");
  BaseLearnerModel model{spec, SvddModel{}};
  switch (spec.kind) {
    case LearnerKind::kSvdd: model.state = fit_svdd(*spec.kernel, x_train); break;
    case LearnerKind::kOcgp: model.state = fit_ocgp(*spec.kernel, x_train); break;
    case LearnerKind::kKpca: model.state = fit_kpca(*spec.kernel, x_train, *spec.kpca_subspace_dim); break;
    case LearnerKind::kGmm: model.state = fit_gmm(*spec.gmm_components, spec.seed, x_train); break;
  }
  return model;
}

Vector score_samples(const BaseLearnerModel& model, const Matrix& x) {
  require(x.cols() == model.feature_dim(), ErrorKind::kInvalidInput,
          "model expects " + std::to_string(model.feature_dim()) + " features, got " + std::to_string(x.cols()));
  Vector s = std::visit(
      [&](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SvddModel>) return score_svdd(m, x);
        else if constexpr (std::is_same_v<T, OcgpModel>) return score_ocgp(m, x);
        else if constexpr (std::is_same_v<T, KpcaModel>) return score_kpca(m, x);
        else return score_gmm(m, x);
      },
      model.state);
  require(s.allFinite(), ErrorKind::kNumericalFailure,
          std::string(to_string(model.kind())) + " produced a non-finite score");
  return s;
}

std::vector<int> kpca_dim_grid(int n) {
  require(n >= 1, ErrorKind::kInvalidInput, "kpca grid needs n >= 1");
  std::vector<int> g;
  for (int q = 2; q < n; q += 4) g.push_back(q);
  g.push_back(n);
  return g;
}

Matrix kpca_score_path(const BaseLearnerModel& model, const Matrix& x) {
  require(model.kind() == LearnerKind::kKpca, ErrorKind::kInvalidInput, "kpca_score_path needs a kpca model");
  require(x.cols() == model.feature_dim(), ErrorKind::kInvalidInput, "feature dimension mismatch");
  const auto& m = std::get<KpcaModel>(model.state);
  const Matrix k = rbf_kernel_matrix(x, m.train, m.kernel);
  const Index n = m.train.rows(), q = m.components.cols();
  Matrix kc(x.rows(), n);
  Vector norm(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double row_mean = k.row(i).mean();
    for (Index j = 0; j < n; ++j) kc(i, j) = k(i, j) - row_mean - m.kernel_row_means[j] + m.kernel_mean;
    norm[i] = 1.0 - 2.0 * row_mean + m.kernel_mean;
  }
  const Eigen::MatrixXd proj = kc * m.components;
  Matrix out(x.rows(), q);
  for (Index i = 0; i < x.rows(); ++i) {
    double acc = 0.0;
    for (Index c = 0; c < q; ++c) {
      acc += proj(i, c) * proj(i, c);
      out(i, c) = -(norm[i] - acc);
    }
  }
  return out;
}

BaseLearnerModel with_kpca_dim(const BaseLearnerModel& model, int dim) {
  require(model.kind() == LearnerKind::kKpca, ErrorKind::kInvalidInput, "with_kpca_dim needs a kpca model");
  const auto& src = std::get<KpcaModel>(model.state);
  require(dim >= 1 && dim <= src.train.rows(), ErrorKind::kInvalidInput, "kpca dimension out of range");
  BaseLearnerModel out = model;
  out.spec.kpca_subspace_dim = dim;
  auto& m = std::get<KpcaModel>(out.state);
  const Index keep = std::min<Index>(dim, src.components.cols());
  m.eigenvalues = src.eigenvalues.head(keep);
  m.components = src.components.leftCols(keep);
  return out;
}

}  // namespace lpfusion
