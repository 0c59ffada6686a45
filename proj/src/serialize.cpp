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


#include "lpfusion/serialize.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "lpfusion/error.hpp"

namespace lpfusion {

namespace {

using nlohmann::json;

json put_vector(const Vector& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) {
    require(std::isfinite(v[i]), ErrorKind::kInvalidInput, "model contains a non-finite value");
    a.push_back(v[i]);
  }
  return a;
}

json put_matrix(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.size(); ++i) {
    require(std::isfinite(m.data()[i]), ErrorKind::kInvalidInput, "model contains a non-finite value");
    data.push_back(m.data()[i]);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Vector get_vector(const json& a) {
  require(a.is_array(), ErrorKind::kParseError, "expected an array of numbers");
  Vector v(static_cast<Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    require(a[i].is_number(), ErrorKind::kParseError, "expected a number");
    v[static_cast<Index>(i)] = a[i].get<double>();
  }
  return v;
}

Matrix get_matrix(const json& j) {
  require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"), ErrorKind::kParseError,
          "malformed matrix");
  const auto rows = j["rows"].get<Index>(), cols = j["cols"].get<Index>();
  const Vector flat = get_vector(j["data"]);
  require(rows >= 0 && cols >= 0 && flat.size() == rows * cols, ErrorKind::kParseError, "matrix size mismatch");
  Matrix m(rows, cols);
  std::copy(flat.data(), flat.data() + flat.size(), m.data());
  return m;
}

json put_kernel(const KernelSpec& k) { return {{"width", k.width}, {"width_multiplier", k.width_multiplier}}; }

KernelSpec get_kernel(const json& j) {
  KernelSpec k;
  k.width = j.at("width").get<double>();
  k.width_multiplier = j.at("width_multiplier").get<double>();
  return k;
}

json put_learner(const BaseLearnerModel& m) {
  json j;
  j["kind"] = std::string(to_string(m.kind()));
  j["seed"] = m.spec.seed;
  if (m.spec.kernel) j["kernel"] = put_kernel(*m.spec.kernel);
  if (m.spec.kpca_subspace_dim) j["kpca_subspace_dim"] = *m.spec.kpca_subspace_dim;
  if (m.spec.gmm_components) j["gmm_components"] = *m.spec.gmm_components;
  json st;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SvddModel>) {
          st = {{"kernel", put_kernel(s.kernel)},
                {"support", put_matrix(s.support)},
                {"alpha", put_vector(s.alpha)},
                {"center_norm", s.center_norm},
                {"iterations", s.iterations}};
        } else if constexpr (std::is_same_v<T, OcgpModel>) {
          st = {{"kernel", put_kernel(s.kernel)},
                {"train", put_matrix(s.train)},
                {"coef", put_vector(s.coef)},
                {"jitter", s.jitter}};
        } else if constexpr (std::is_same_v<T, KpcaModel>) {
          st = {{"kernel", put_kernel(s.kernel)},
                {"train", put_matrix(s.train)},
                {"kernel_row_means", put_vector(s.kernel_row_means)},
                {"kernel_mean", s.kernel_mean},
                {"eigenvalues", put_vector(s.eigenvalues)},
                {"components", put_matrix(s.components)}};
        } else {
          json covs = json::array();
          for (const auto& c : s.covariances) covs.push_back(put_matrix(c));
          st = {{"weights", put_vector(s.weights)},
                {"means", put_matrix(s.means)},
                {"covariances", covs},
                {"ridge", s.ridge},
                {"iterations", s.iterations}};
        }
      },
      m.state);
  j["state"] = st;
  return j;
}

BaseLearnerModel get_learner(const json& j) {
  BaseLearnerModel m;
  m.spec.kind = learner_kind_from_string(j.at("kind").get<std::string>());
  m.spec.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("kernel")) m.spec.kernel = get_kernel(j["kernel"]);
  if (j.contains("kpca_subspace_dim")) m.spec.kpca_subspace_dim = j["kpca_subspace_dim"].get<int>();
  if (j.contains("gmm_components")) m.spec.gmm_components = j["gmm_components"].get<int>();
  m.spec.validate();
  const json& st = j.at("state");
  switch (m.spec.kind) {
    case LearnerKind::kSvdd: {
      SvddModel s;
      s.kernel = get_kernel(st.at("kernel"));
      s.support = get_matrix(st.at("support"));
      s.alpha = get_vector(st.at("alpha"));
      s.center_norm = st.at("center_norm").get<double>();
      s.iterations = st.at("iterations").get<int>();
      require(s.alpha.size() == s.support.rows(), ErrorKind::kParseError, "svdd alpha/support mismatch");
      m.state = std::move(s);
      break;
    }
    case LearnerKind::kOcgp: {
      OcgpModel s;
      s.kernel = get_kernel(st.at("kernel"));
      s.train = get_matrix(st.at("train"));
      s.coef = get_vector(st.at("coef"));
      s.jitter = st.at("jitter").get<double>();
      require(s.coef.size() == s.train.rows(), ErrorKind::kParseError, "ocgp coef/train mismatch");
      m.state = std::move(s);
      break;
    }
    case LearnerKind::kKpca: {
      KpcaModel s;
      s.kernel = get_kernel(st.at("kernel"));
      s.train = get_matrix(st.at("train"));
      s.kernel_row_means = get_vector(st.at("kernel_row_means"));
      s.kernel_mean = st.at("kernel_mean").get<double>();
      s.eigenvalues = get_vector(st.at("eigenvalues"));
      s.components = get_matrix(st.at("components"));
      require(s.kernel_row_means.size() == s.train.rows() && s.components.rows() == s.train.rows() &&
                  s.components.cols() == s.eigenvalues.size(),
              ErrorKind::kParseError, "kpca shape mismatch");
      m.state = std::move(s);
      break;
    }
    case LearnerKind::kGmm: {
      GmmModel s;
      s.weights = get_vector(st.at("weights"));
      s.means = get_matrix(st.at("means"));
      for (const auto& c : st.at("covariances")) s.covariances.push_back(get_matrix(c));
      s.ridge = st.at("ridge").get<double>();
      s.iterations = st.at("iterations").get<int>();
      require(s.weights.size() == s.means.rows() && s.covariances.size() == static_cast<std::size_t>(s.means.rows()),
              ErrorKind::kParseError, "gmm shape mismatch");
      s.prepare();
      m.state = std::move(s);
      break;
    }
  }
  return m;
}

}  // namespace

void save_model(std::ostream& out, const FusionModel& model) {
  model.validate();
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["mode"] = std::string(to_string(model.mode));
  j["optimizer"] = std::string(to_string(model.optimizer));
  j["seed"] = model.seed;
  j["threshold"] = model.threshold;
  const auto& c = model.config;
  j["config"] = {{"p_base", c.p_base},         {"mu0", c.mu0},
                 {"beta", c.beta},             {"learning_rate", c.learning_rate},
                 {"max_epochs", c.max_epochs}, {"tolerance", c.tolerance},
                 {"locality_k", c.locality_k}, {"locality_enabled", c.locality_enabled}};
  j["anchor_rule"] = {{"neighbors", model.anchor_rule.neighbors},
                      {"unit_norm_rows", model.anchor_rule.unit_norm_rows},
                      {"weighted_average", model.anchor_rule.weighted_average},
                      {"neighbor_fraction", model.anchor_rule.neighbor_fraction}};
  j["scaler"] = {{"lower", put_vector(model.scaler.lower)}, {"range", put_vector(model.scaler.range)}};
  json learners = json::array();
  for (const auto& l : model.learners) learners.push_back(put_learner(l));
  j["learners"] = learners;
  const auto& n = model.normalizer;
  j["normalizer"] = {{"mean", put_vector(n.mean)},   {"stddev", put_vector(n.stddev)}, {"lower", put_vector(n.lower)},
                     {"upper", put_vector(n.upper)}, {"rho", n.rho}};
  j["weights"] = {{"weights", put_matrix(model.weights.weights)},
                  {"local_p", put_vector(model.weights.local_p)},
                  {"anchor_features", put_matrix(model.weights.anchor_features)}};
  out << j.dump(1) << '\n';
  require(out.good(), ErrorKind::kIoError, "failed writing model");
}

void save_model(const std::string& path, const FusionModel& model) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIoError, "cannot open '" + path + "' for writing");
  save_model(out, model);
}

FusionModel load_model(std::istream& in) {
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kParseError, std::string("model is not valid JSON: ") + e.what());
  }
  require(j.is_object() && j.value("format", std::string()) == kModelFormat, ErrorKind::kParseError,
          "not an lpfusion model file");
  require(j.value("version", -1) == kModelVersion, ErrorKind::kParseError,
          "unsupported model version " + j.value("version", json()).dump());
  FusionModel m;
  try {
    m.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
    m.optimizer = optimizer_kind_from_string(j.at("optimizer").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.threshold = j.at("threshold").get<double>();
    const json& c = j.at("config");
    m.config.p_base = c.at("p_base").get<double>();
    m.config.mu0 = c.at("mu0").get<double>();
    m.config.beta = c.at("beta").get<double>();
    m.config.learning_rate = c.at("learning_rate").get<double>();
    m.config.max_epochs = c.at("max_epochs").get<int>();
    m.config.tolerance = c.at("tolerance").get<double>();
    m.config.locality_k = c.at("locality_k").get<int>();
    m.config.locality_enabled = c.at("locality_enabled").get<bool>();
    m.anchor_rule.neighbors = j.at("anchor_rule").at("neighbors").get<int>();
    m.anchor_rule.unit_norm_rows = j.at("anchor_rule").at("unit_norm_rows").get<bool>();
    m.anchor_rule.weighted_average = j.at("anchor_rule").at("weighted_average").get<bool>();
    m.anchor_rule.neighbor_fraction = j.at("anchor_rule").at("neighbor_fraction").get<double>();
    m.scaler.lower = get_vector(j.at("scaler").at("lower"));
    m.scaler.range = get_vector(j.at("scaler").at("range"));
    for (const auto& l : j.at("learners")) m.learners.push_back(get_learner(l));
    const json& n = j.at("normalizer");
    m.normalizer.mean = get_vector(n.at("mean"));
    m.normalizer.stddev = get_vector(n.at("stddev"));
    m.normalizer.lower = get_vector(n.at("lower"));
    m.normalizer.upper = get_vector(n.at("upper"));
    m.normalizer.rho = n.at("rho").get<int>();
    const json& w = j.at("weights");
    m.weights.weights = get_matrix(w.at("weights"));
    m.weights.local_p = get_vector(w.at("local_p"));
    m.weights.anchor_features = get_matrix(w.at("anchor_features"));
  } catch (const json::exception& e) {
    fail(ErrorKind::kParseError, std::string("malformed model: ") + e.what());
  }
  try {
    m.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kParseError, std::string("inconsistent model: ") + e.what());
  }
  return m;
}

FusionModel load_model(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIoError, "cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace lpfusion
