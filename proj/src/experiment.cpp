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


#include "lpfusion/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "lpfusion/error.hpp"
#include "lpfusion/log.hpp"
#include "lpfusion/scorespace.hpp"

namespace lpfusion {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// splitmix64 finalizer
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// RFC-4180 style: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

std::string json_scalar_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return v.dump();
}

template <class T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Data

DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIoError, "cannot open schema '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kParseError, "schema '" + path + "': " + e.what());
  }
  require(j.is_object(), ErrorKind::kParseError, "schema '" + path + "' is not a JSON object");
  require(j.contains("label_column") && j["label_column"].is_string(), ErrorKind::kParseError,
          "schema '" + path + "' needs a string label_column");
  require(j.contains("normal_value"), ErrorKind::kParseError, "schema '" + path + "' needs normal_value");
  DatasetSchema s;
  s.label_column = j["label_column"].get<std::string>();
  s.normal_value = json_scalar_to_string(j["normal_value"]);
  s.name = j.value("name", std::string());
  s.provenance = j.value("provenance", std::string());
  if (j.contains("feature_columns"))
    for (const auto& c : j["feature_columns"]) s.feature_columns.push_back(c.get<std::string>());
  if (j.contains("anomaly_values"))
    for (const auto& c : j["anomaly_values"]) s.anomaly_values.push_back(json_scalar_to_string(c));
  return s;
}

std::size_t Dataset::normal_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

Dataset load_dataset(std::istream& csv, const DatasetSchema& schema) {
  std::string line;
  require(static_cast<bool>(std::getline(csv, line)), ErrorKind::kParseError, "dataset is empty");
  const auto header = split_csv(line);
  const auto find_col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorKind::kParseError, "column '" + name + "' not found in header");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t label_col = find_col(schema.label_column);
  std::vector<std::size_t> feat_cols;
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != label_col) feat_cols.push_back(c);
  } else {
    for (const auto& name : schema.feature_columns) feat_cols.push_back(find_col(name));
  }
  require(!feat_cols.empty(), ErrorKind::kParseError, "dataset has no feature columns");

  Dataset ds;
  ds.name = schema.name;
  ds.provenance = schema.provenance;
  for (std::size_t c : feat_cols) ds.feature_names.push_back(header[c]);
  std::vector<double> values;
  std::size_t row_no = 1;
  while (std::getline(csv, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    require(cells.size() == header.size(), ErrorKind::kParseError,
            "row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) + " cells, expected " +
                std::to_string(header.size()));
    const std::string& label = cells[label_col];
    bool missing = label.empty() || label == "?";
    for (std::size_t c : feat_cols) missing = missing || cells[c].empty() || cells[c] == "?";
    if (missing) {
      ++ds.rejected_rows;
      continue;
    }
    for (std::size_t c : feat_cols) {
      const std::string& cell = cells[c];
      double v = 0.0;
      const char* begin = cell.data() + (cell[0] == '+' ? 1 : 0);
      const auto r = std::from_chars(begin, cell.data() + cell.size(), v);
      require(r.ec == std::errc() && r.ptr == cell.data() + cell.size() && std::isfinite(v), ErrorKind::kParseError,
              "row " + std::to_string(row_no) + ", column '" + header[c] + "': '" + cell + "' is not numeric");
      values.push_back(v);
    }
    if (label == schema.normal_value) {
      ds.labels.push_back(1);
    } else {
      require(schema.anomaly_values.empty() ||
                  std::find(schema.anomaly_values.begin(), schema.anomaly_values.end(), label) !=
                      schema.anomaly_values.end(),
              ErrorKind::kParseError,
              "row " + std::to_string(row_no) + ": label '" + label + "' is not declared in the schema");
      ds.labels.push_back(-1);
    }
  }
  require(!ds.labels.empty(), ErrorKind::kInsufficientData, "dataset has no complete rows");
  const auto n = static_cast<Index>(ds.labels.size()), f = static_cast<Index>(feat_cols.size());
  ds.features = Eigen::Map<const Matrix>(values.data(), n, f);
  if (ds.rejected_rows > 0)
    log::warning(std::to_string(ds.rejected_rows) + " row(s) with missing values rejected");
  log::info("loaded " + std::to_string(ds.size()) + " rows (" + std::to_string(ds.normal_count()) + " normal, " +
            std::to_string(ds.anomaly_count()) + " anomalous), " + std::to_string(f) + " features");
  return ds;
}

Dataset load_dataset(const std::string& csv_path, const DatasetSchema& schema) {
  std::ifstream in(csv_path);
  require(in.good(), ErrorKind::kIoError, "cannot open dataset '" + csv_path + "'");
  Dataset ds = load_dataset(in, schema);
  if (ds.name.empty()) {
    const auto slash = csv_path.find_last_of('/');
    std::string base = slash == std::string::npos ? csv_path : csv_path.substr(slash + 1);
    const auto dot = base.find_last_of('.');
    ds.name = dot == std::string::npos ? base : base.substr(0, dot);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view to_string(SplitMode mode) { return mode == SplitMode::kPure ? "pure" : "nonpure"; }

SplitPlan make_splits(const Dataset& dataset, SplitMode mode, std::uint64_t seed, const SplitRatios& ratios) {
  require(ratios.train > 0.0 && ratios.validation > 0.0 && ratios.train + ratios.validation < 1.0,
          ErrorKind::kInvalidInput, "split ratios must leave a test share");
  std::vector<std::size_t> normals, anomalies;
  for (std::size_t i = 0; i < dataset.size(); ++i) (dataset.labels[i] == 1 ? normals : anomalies).push_back(i);
  require(normals.size() >= 10, ErrorKind::kInsufficientData,
          "splitting needs at least 10 normal rows, got " + std::to_string(normals.size()));

  SplitPlan plan;
  plan.mode = mode;
  plan.seed = seed;
  std::mt19937_64 rng(derive_seed(seed, 1));
  shuffle_in_place(normals, rng);
  const auto nn = normals.size();
  const auto ntr = static_cast<std::size_t>(std::lround(ratios.train * static_cast<double>(nn)));
  const auto nva = static_cast<std::size_t>(std::lround(ratios.validation * static_cast<double>(nn)));
  require(ntr >= 2 && nva >= 1 && ntr + nva < nn, ErrorKind::kInsufficientData, "too few normal rows for a split");
  plan.train.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(ntr));
  plan.validation.assign(normals.begin() + static_cast<std::ptrdiff_t>(ntr),
                         normals.begin() + static_cast<std::ptrdiff_t>(ntr + nva));
  plan.test.assign(normals.begin() + static_cast<std::ptrdiff_t>(ntr + nva), normals.end());

  if (mode == SplitMode::kPure) {
    plan.test.insert(plan.test.end(), anomalies.begin(), anomalies.end());
  } else {
    require(anomalies.size() >= 3, ErrorKind::kInsufficientData, "nonpure splits need at least 3 anomalies");
    std::mt19937_64 arng(derive_seed(seed, 2));
    shuffle_in_place(anomalies, arng);
    const auto na = anomalies.size();
    auto reserve = static_cast<std::size_t>(std::lround(ratios.anomaly_reserve * static_cast<double>(na)));
    reserve = std::clamp<std::size_t>(reserve, 1, na - 2);
    const std::size_t rest = na - reserve;
    auto atr = static_cast<std::size_t>(std::lround(ratios.anomaly_train_share * static_cast<double>(rest)));
    atr = std::clamp<std::size_t>(atr, 1, rest - 1);
    plan.test.insert(plan.test.end(), anomalies.begin(), anomalies.begin() + static_cast<std::ptrdiff_t>(reserve));
    plan.train.insert(plan.train.end(), anomalies.begin() + static_cast<std::ptrdiff_t>(reserve),
                      anomalies.begin() + static_cast<std::ptrdiff_t>(reserve + atr));
    plan.validation.insert(plan.validation.end(), anomalies.begin() + static_cast<std::ptrdiff_t>(reserve + atr),
                           anomalies.end());
  }
  std::sort(plan.train.begin(), plan.train.end());
  std::sort(plan.validation.begin(), plan.validation.end());
  std::sort(plan.test.begin(), plan.test.end());
  return plan;
}

// ---------------------------------------------------------------------------
// Grid search

GridSearchResult grid_search(const std::vector<GridAxis>& axes,
                             const std::function<double(std::span<const double>)>& evaluate) {
  require(!axes.empty(), ErrorKind::kInvalidInput, "grid has no axes");
  for (const auto& a : axes)
    require(!a.values.empty(), ErrorKind::kInvalidInput, "grid axis '" + a.name + "' is empty");
  GridSearchResult res;
  std::vector<std::size_t> pos(axes.size(), 0);
  std::vector<double> tuple(axes.size());
  bool have = false;
  while (true) {
    for (std::size_t a = 0; a < axes.size(); ++a) tuple[a] = axes[a].values[pos[a]];
    const double score = evaluate(tuple);
    ++res.evaluated;
    if (!have || (!std::isnan(score) && (std::isnan(res.score) || score > res.score))) {
      res.best = tuple;
      res.score = score;
      have = true;
    }
    std::size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++pos[a] < axes[a].values.size()) break;
      pos[a] = 0;
      if (a == 0) return res;
    }
  }
}

std::string_view to_string(Criterion criterion) {
  switch (criterion) {
    case Criterion::kRpau: return "rpau";
    case Criterion::kPseudoNegGmean: return "pseudo_neg_gmean";
    case Criterion::kNonpureValAuc: return "nonpure_val_auc";
  }
  return "unknown";
}

Criterion criterion_for(FusionMode mode) {
  switch (mode) {
    case FusionMode::kPureRpau: return Criterion::kRpau;
    case FusionMode::kPurePseudoneg: return Criterion::kPseudoNegGmean;
    case FusionMode::kNonpure: return Criterion::kNonpureValAuc;
  }
  return Criterion::kRpau;
}

SplitMode split_mode_for(FusionMode mode) {
  return mode == FusionMode::kNonpure ? SplitMode::kNonpure : SplitMode::kPure;
}

// ---------------------------------------------------------------------------
// Trials

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kInteriorPoint: return "interior_point";
    case Method::kFrankWolfe: return "frank_wolfe";
    case Method::kSumRule: return "sum_rule";
    case Method::kSingleBest: return "single_best";
    case Method::kSvdd: return "svdd";
    case Method::kOcgp: return "ocgp";
    case Method::kKpca: return "kpca";
    case Method::kGmm: return "gmm";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : kAllMethods)
    if (to_string(m) == name) return m;
  fail(ErrorKind::kInvalidInput, "unknown method '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  require(!p_grid.empty(), ErrorKind::kInvalidInput, "p grid is empty");
  for (double p : p_grid)
    require(p >= kMinP && p <= kMaxP, ErrorKind::kInvalidInput, "p grid value outside [1+1e-6, 100]");
  require(!rho_grid.empty(), ErrorKind::kInvalidInput, "rho grid is empty");
  for (int r : rho_grid) require(r >= 1 && r <= 10, ErrorKind::kInvalidInput, "rho grid value outside 1..10");
  require(!width_multipliers.empty(), ErrorKind::kInvalidInput, "kernel multiplier grid is empty");
  for (double m : width_multipliers) require(m > 0.0, ErrorKind::kInvalidInput, "kernel multipliers must be positive");
  require(!gmm_components.empty(), ErrorKind::kInvalidInput, "gmm component grid is empty");
  for (int c : gmm_components) require(c >= 1, ErrorKind::kInvalidInput, "gmm components must be positive");
  require(learner_rho >= 1 && learner_rho <= 10, ErrorKind::kInvalidInput, "learner rho outside 1..10");
  optimizer.validate();
  require(anchor_rule.neighbors >= 1, ErrorKind::kInvalidInput, "anchor neighbours must be positive");
  require(anchor_rule.neighbor_fraction >= 0.0 && anchor_rule.neighbor_fraction <= 1.0, ErrorKind::kInvalidInput,
          "anchor fraction outside [0, 1]");
  require(pseudo_fraction > 0.0 && pseudo_fraction <= 1.0, ErrorKind::kInvalidInput, "pseudo fraction outside (0, 1]");
  require(!methods.empty(), ErrorKind::kInvalidInput, "no methods selected");
  require(jobs >= 1, ErrorKind::kInvalidInput, "jobs must be positive");
}

const MethodAggregate& RunSummary::aggregate(Method method) const {
  for (const auto& a : aggregates)
    if (a.method == method) return a;
  fail(ErrorKind::kInvalidInput, "method '" + std::string(to_string(method)) + "' was not run");
}

namespace {

struct TrialContext {
  const ExperimentConfig* config = nullptr;
  Criterion criterion = Criterion::kRpau;
  std::uint64_t seed = 0;
  SplitPlan plan;
  MinMaxScaler scaler;
  Matrix xtr, xva, xte, xtr_normal;
  std::vector<int> ytr, yva, yte;

  // validation rows plus their negated copies (labels -1)
  std::vector<std::size_t> pseudo_source;
  std::vector<int> pseudo_labels;
  Matrix xpseudo;

  std::vector<BaseLearnerModel> learners;
  std::vector<LearnerChoice> choices;
  NormalizerState zstate;
  ScoreMatrix ztr, ztr_normal, zva, zte, zpseudo;
  std::vector<std::pair<std::string, double>> timings;
};

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

std::vector<double> pseudo_expand(std::span<const double> val, const TrialContext& ctx) {
  std::vector<double> out(ctx.pseudo_source.size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double v = val[ctx.pseudo_source[r]];
    out[r] = ctx.pseudo_labels[r] == 1 ? v : -v;
  }
  return out;
}

// Selection score of one z-scored learner column on validation data.
double single_criterion(const TrialContext& ctx, std::span<const double> val_z) {
  switch (ctx.criterion) {
    case Criterion::kRpau: return rpau_score(val_z, ctx.config->learner_rho);
    case Criterion::kPseudoNegGmean: return best_g_mean(pseudo_expand(val_z, ctx), ctx.pseudo_labels);
    case Criterion::kNonpureValAuc: return auc_roc(val_z, ctx.yva);
  }
  return 0.0;
}

// z-scores validation scores with statistics of the training-normal scores
std::vector<double> zscore_against(const Vector& train, const Vector& val) {
  const double mean = train.mean();
  const double sd = std::max(std::sqrt((train.array() - mean).square().mean()), kStdFloor);
  std::vector<double> out(static_cast<std::size_t>(val.size()));
  for (Index i = 0; i < val.size(); ++i) out[static_cast<std::size_t>(i)] = (val[i] - mean) / sd;
  return out;
}

double guarded(const std::function<double()>& f) {
  try {
    return f();
  } catch (const Error& e) {
    log::debug(std::string("grid candidate skipped: ") + e.what());
    return std::numeric_limits<double>::quiet_NaN();
  }
}

void choose_learners(TrialContext& ctx) {
  const ExperimentConfig& cfg = *ctx.config;
  const double base = kernel_width_base(ctx.xtr_normal);
  const int n = static_cast<int>(ctx.xtr_normal.rows());

  for (LearnerKind kind : kAllLearners) {
    LearnerChoice choice;
    choice.kind = kind;
    BaseLearnerSpec spec;
    if (kind == LearnerKind::kSvdd || kind == LearnerKind::kOcgp) {
      const GridAxis axis{"width_multiplier", cfg.width_multipliers};
      const auto best = grid_search({axis}, [&](std::span<const double> t) {
        return guarded([&] {
          const KernelSpec k = KernelSpec::from_grid(t[0], base);
          const auto m = fit_base_learner(kind == LearnerKind::kSvdd ? BaseLearnerSpec::svdd(k) : BaseLearnerSpec::ocgp(k),
                                          ctx.xtr_normal);
          return single_criterion(ctx, zscore_against(score_samples(m, ctx.xtr_normal), score_samples(m, ctx.xva)));
        });
      });
      choice.width_multiplier = best.best[0];
      choice.validation_score = best.score;
      const KernelSpec k = KernelSpec::from_grid(best.best[0], base);
      spec = kind == LearnerKind::kSvdd ? BaseLearnerSpec::svdd(k) : BaseLearnerSpec::ocgp(k);
    } else if (kind == LearnerKind::kKpca) {
      const auto dims = kpca_dim_grid(n);
      std::vector<double> dim_values(dims.begin(), dims.end());
      // one eigendecomposition per width; every dimension read off the score path
      std::vector<std::vector<double>> table(cfg.width_multipliers.size());
      for (std::size_t w = 0; w < cfg.width_multipliers.size(); ++w) {
        table[w].assign(dims.size(), std::numeric_limits<double>::quiet_NaN());
        try {
          const KernelSpec k = KernelSpec::from_grid(cfg.width_multipliers[w], base);
          const auto full = fit_base_learner(BaseLearnerSpec::kpca(k, n), ctx.xtr_normal);
          const Matrix ptr = kpca_score_path(full, ctx.xtr_normal);
          const Matrix pva = kpca_score_path(full, ctx.xva);
          if (ptr.cols() == 0) continue;
          for (std::size_t q = 0; q < dims.size(); ++q) {
            const Index c = std::min<Index>(dims[q], ptr.cols()) - 1;
            table[w][q] = guarded([&] {
              return single_criterion(ctx, zscore_against(ptr.col(c), pva.col(c)));
            });
          }
        } catch (const Error& e) {
          log::debug(std::string("kpca width skipped: ") + e.what());
        }
      }
      const auto best = grid_search({{"width_multiplier", cfg.width_multipliers}, {"kpca_dim", dim_values}},
                                    [&](std::span<const double> t) {
                                      const auto w = static_cast<std::size_t>(
                                          std::find(cfg.width_multipliers.begin(), cfg.width_multipliers.end(), t[0]) -
                                          cfg.width_multipliers.begin());
                                      const auto q = static_cast<std::size_t>(
                                          std::find(dim_values.begin(), dim_values.end(), t[1]) - dim_values.begin());
                                      return table[w][q];
                                    });
      choice.width_multiplier = best.best[0];
      choice.kpca_dim = static_cast<int>(best.best[1]);
      choice.validation_score = best.score;
      spec = BaseLearnerSpec::kpca(KernelSpec::from_grid(best.best[0], base), choice.kpca_dim);
    } else {
      std::vector<double> comps(cfg.gmm_components.begin(), cfg.gmm_components.end());
      const std::uint64_t gseed = derive_seed(ctx.seed, 3);
      const auto best = grid_search({{"gmm_components", comps}}, [&](std::span<const double> t) {
        return guarded([&] {
          const auto m = fit_base_learner(BaseLearnerSpec::gmm(static_cast<int>(t[0]), gseed), ctx.xtr_normal);
          return single_criterion(ctx, zscore_against(score_samples(m, ctx.xtr_normal), score_samples(m, ctx.xva)));
        });
      });
      choice.gmm_components = static_cast<int>(best.best[0]);
      choice.validation_score = best.score;
      spec = BaseLearnerSpec::gmm(choice.gmm_components, gseed);
    }
    require(std::isfinite(choice.validation_score), ErrorKind::kNumericalFailure,
            std::string("no usable ") + std::string(to_string(kind)) + " configuration");
    ctx.learners.push_back(fit_base_learner(spec, ctx.xtr_normal));
    ctx.choices.push_back(choice);
  }
}

ScoreMatrix raw_scores(const std::vector<BaseLearnerModel>& learners, const Matrix& x) {
  ScoreMatrix s;
  s.values.resize(x.rows(), static_cast<Index>(learners.size()));
  for (std::size_t j = 0; j < learners.size(); ++j) {
    s.values.col(static_cast<Index>(j)) = score_samples(learners[j], x);
    s.learner_ids.emplace_back(to_string(learners[j].kind()));
  }
  return s;
}

Matrix rows_of(const Matrix& x, const std::vector<std::size_t>& idx) { return select_rows(x, idx); }

TrialContext prepare(const Dataset& dataset, const ExperimentConfig& config, std::uint64_t seed) {
  TrialContext ctx;
  ctx.config = &config;
  ctx.criterion = criterion_for(config.mode);
  ctx.seed = seed;

  auto t0 = Clock::now();
  ctx.plan = make_splits(dataset, split_mode_for(config.mode), seed, config.ratios);
  const Matrix raw_tr = rows_of(dataset.features, ctx.plan.train);
  ctx.scaler = MinMaxScaler::fit(raw_tr);
  ctx.xtr = ctx.scaler.transform(raw_tr);
  ctx.xva = ctx.scaler.transform(rows_of(dataset.features, ctx.plan.validation));
  ctx.xte = ctx.scaler.transform(rows_of(dataset.features, ctx.plan.test));
  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    for (std::size_t i : idx) y.push_back(dataset.labels[i]);
    return y;
  };
  ctx.ytr = labels_of(ctx.plan.train);
  ctx.yva = labels_of(ctx.plan.validation);
  ctx.yte = labels_of(ctx.plan.test);
  std::vector<std::size_t> normal_rows;
  for (std::size_t i = 0; i < ctx.ytr.size(); ++i)
    if (ctx.ytr[i] == 1) normal_rows.push_back(i);
  ctx.xtr_normal = rows_of(ctx.xtr, normal_rows);

  ScoreMatrix placeholder{Matrix::Zero(ctx.xva.rows(), 1), {"placeholder"}, ScoreStage::kZscored};
  const LabeledScores ps = generate_pseudo_negatives(placeholder, config.pseudo_fraction, derive_seed(seed, 4));
  ctx.pseudo_source = ps.source;
  ctx.pseudo_labels = ps.labels;
  ctx.xpseudo = rows_of(ctx.xva, ctx.pseudo_source);
  ctx.timings.emplace_back("split", seconds_since(t0));

  t0 = Clock::now();
  choose_learners(ctx);
  const ScoreMatrix rtr = raw_scores(ctx.learners, ctx.xtr);
  ScoreMatrix rtr_normal{select_rows(rtr.values, normal_rows), rtr.learner_ids, ScoreStage::kRaw};
  ctx.zstate = fit_zscore(rtr_normal);
  ctx.ztr = apply_zscore(ctx.zstate, rtr);
  ctx.ztr_normal = apply_zscore(ctx.zstate, rtr_normal);
  ctx.zva = apply_zscore(ctx.zstate, raw_scores(ctx.learners, ctx.xva));
  ctx.zte = apply_zscore(ctx.zstate, raw_scores(ctx.learners, ctx.xte));
  ctx.zpseudo = generate_pseudo_negatives(ctx.zva, config.pseudo_fraction, derive_seed(seed, 4)).scores;
  ctx.timings.emplace_back("learners", seconds_since(t0));
  return ctx;
}

// Threshold on z-scale validation scores (and their pseudo-negative extension).
double method_threshold(const TrialContext& ctx, std::span<const double> val, std::span<const double> pseudo,
                        int rho) {
  switch (ctx.criterion) {
    case Criterion::kRpau: return select_threshold(val, std::nullopt, ThresholdStrategy::kRpau, rho);
    case Criterion::kPseudoNegGmean:
      return select_threshold(pseudo, std::span<const int>(ctx.pseudo_labels), ThresholdStrategy::kPseudoNegGmean);
    case Criterion::kNonpureValAuc:
      return select_threshold(val, std::span<const int>(ctx.yva), ThresholdStrategy::kPseudoNegGmean);
  }
  return 0.0;
}

struct FusedFit {
  LocalWeightSet weights;
  NormalizerState normalizer;
  double p_base = 0.0;
  int rho = 0;
  int epochs = 0;
  double validation_score = 0.0;
  double threshold = 0.0;
};

LocalWeightSet train_weights(const TrialContext& ctx, OptimizerKind kind, const ScoreMatrix& ntr, double p,
                             int* epochs) {
  OptimizerConfig oc = ctx.config->optimizer;
  oc.p_base = p;
  oc.locality_k = std::min<int>(oc.locality_k, static_cast<int>(ntr.rows()) - 1);
  if (kind == OptimizerKind::kInteriorPoint) {
    auto r = optimize_interior_point(ntr, ctx.xtr, ctx.ytr, oc);
    if (epochs) *epochs = r.epochs;
    return std::move(r.weights);
  }
  const auto r = optimize_frank_wolfe(ntr, ctx.ytr, p, oc);
  if (epochs) *epochs = r.iterations;
  return shared_weights(std::span<const double>(r.weights.data(), static_cast<std::size_t>(r.weights.size())), p);
}

FusedFit fit_fused(const TrialContext& ctx, OptimizerKind kind) {
  const ExperimentConfig& cfg = *ctx.config;
  const AnchorRule& rule = cfg.anchor_rule;
  auto evaluate = [&](double p, int rho) {
    const NormalizerState st = fit_trim(ctx.zstate, ctx.ztr_normal, rho);
    const ScoreMatrix ntr = trimmed_minmax(st, ctx.ztr);
    const LocalWeightSet ws = train_weights(ctx, kind, ntr, p, nullptr);
    switch (ctx.criterion) {
      case Criterion::kRpau: return rpau_score(to_std(fuse_scores(ws, rule, trimmed_minmax(st, ctx.zva), ctx.xva)), rho);
      case Criterion::kPseudoNegGmean:
        return best_g_mean(to_std(fuse_scores(ws, rule, trimmed_minmax(st, ctx.zpseudo), ctx.xpseudo)),
                           ctx.pseudo_labels);
      case Criterion::kNonpureValAuc:
        return auc_roc(to_std(fuse_scores(ws, rule, trimmed_minmax(st, ctx.zva), ctx.xva)), ctx.yva);
    }
    return 0.0;
  };
  std::vector<double> rhos(cfg.rho_grid.begin(), cfg.rho_grid.end());
  const auto best = grid_search({{"p_base", cfg.p_grid}, {"rho", rhos}}, [&](std::span<const double> t) {
    return guarded([&] { return evaluate(t[0], static_cast<int>(t[1])); });
  });
  require(std::isfinite(best.score), ErrorKind::kNumericalFailure,
          std::string(to_string(kind)) + ": no grid point produced a usable fusion");

  FusedFit fit;
  fit.p_base = best.best[0];
  fit.rho = static_cast<int>(best.best[1]);
  fit.validation_score = best.score;
  fit.normalizer = fit_trim(ctx.zstate, ctx.ztr_normal, fit.rho);
  fit.weights = train_weights(ctx, kind, trimmed_minmax(fit.normalizer, ctx.ztr), fit.p_base, &fit.epochs);
  const auto val = to_std(fuse_scores(fit.weights, rule, ctx.zva, ctx.xva));
  const auto pseudo = to_std(fuse_scores(fit.weights, rule, ctx.zpseudo, ctx.xpseudo));
  fit.threshold = method_threshold(ctx, val, pseudo, fit.rho);
  return fit;
}

MethodOutcome baseline_outcome(const TrialContext& ctx, Method method, int column) {
  MethodOutcome out;
  out.method = method;
  out.rho = ctx.config->learner_rho;
  const bool sum = column < 0;
  auto fuse = [&](const ScoreMatrix& s) {
    return to_std(sum ? baseline_fuse(s, BaselineRule::kSum) : baseline_fuse(s, BaselineRule::kSingleBest, column));
  };
  const auto val = fuse(ctx.zva);
  const auto pseudo = fuse(ctx.zpseudo);
  const auto test = fuse(ctx.zte);
  if (!sum) {
    out.single_best = column;
    out.validation_score = ctx.choices[static_cast<std::size_t>(column)].validation_score;
  } else {
    out.validation_score = guarded([&] { return single_criterion(ctx, val); });
  }
  out.test = evaluate(test, ctx.yte, method_threshold(ctx, val, pseudo, out.rho));
  return out;
}

int learner_column(Method m) {
  switch (m) {
    case Method::kSvdd: return 0;
    case Method::kOcgp: return 1;
    case Method::kKpca: return 2;
    case Method::kGmm: return 3;
    default: return -1;
  }
}

}  // namespace

TrialResult run_trial(const Dataset& dataset, const ExperimentConfig& config, int trial, std::uint64_t seed) {
  TrialResult res;
  res.trial = trial;
  res.seed = seed;
  try {
    config.validate();
    TrialContext ctx = prepare(dataset, config, seed);
    res.learners = ctx.choices;
    auto t0 = Clock::now();
    int best_col = 0;
    for (std::size_t j = 1; j < ctx.choices.size(); ++j)
      if (ctx.choices[j].validation_score > ctx.choices[static_cast<std::size_t>(best_col)].validation_score)
        best_col = static_cast<int>(j);
    for (Method m : config.methods) {
      if (m == Method::kInteriorPoint || m == Method::kFrankWolfe) continue;
      const int col = m == Method::kSumRule ? -1 : (m == Method::kSingleBest ? best_col : learner_column(m));
      res.methods.push_back(baseline_outcome(ctx, m, col));
    }
    ctx.timings.emplace_back("baselines", seconds_since(t0));

    for (Method m : config.methods) {
      if (m != Method::kInteriorPoint && m != Method::kFrankWolfe) continue;
      t0 = Clock::now();
      const OptimizerKind kind = m == Method::kInteriorPoint ? OptimizerKind::kInteriorPoint : OptimizerKind::kFrankWolfe;
      const FusedFit fit = fit_fused(ctx, kind);
      MethodOutcome out;
      out.method = m;
      out.p_base = fit.p_base;
      out.rho = fit.rho;
      out.epochs = fit.epochs;
      out.validation_score = fit.validation_score;
      out.test = evaluate(to_std(fuse_scores(fit.weights, config.anchor_rule, ctx.zte, ctx.xte)), ctx.yte, fit.threshold);
      res.methods.push_back(out);
      ctx.timings.emplace_back(std::string(to_string(m)), seconds_since(t0));
    }
    // report in the configured method order
    std::vector<MethodOutcome> ordered;
    for (Method m : config.methods)
      for (const auto& o : res.methods)
        if (o.method == m) ordered.push_back(o);
    res.methods = std::move(ordered);
    res.timings = std::move(ctx.timings);
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    res.methods.clear();
  }
  return res;
}

std::vector<MethodAggregate> aggregate_trials(std::span<const TrialResult> trials, std::span<const Method> methods) {
  std::vector<MethodAggregate> out;
  for (Method m : methods) {
    std::vector<double> roc, pr, gm;
    for (const auto& t : trials) {
      if (!t.ok) continue;
      for (const auto& o : t.methods)
        if (o.method == m) {
          roc.push_back(o.test.auc_roc);
          pr.push_back(o.test.auc_pr);
          gm.push_back(o.test.g_mean);
        }
    }
    out.push_back(MethodAggregate{m, summarize(roc), summarize(pr), summarize(gm)});
  }
  return out;
}

RunSummary run_trials(const Dataset& dataset, const ExperimentConfig& config, int n_trials, std::uint64_t base_seed) {
  require(n_trials >= 1, ErrorKind::kInvalidInput, "n_trials must be at least 1");
  config.validate();
  RunSummary summary;
  summary.dataset = dataset.name;
  summary.config = config;
  summary.base_seed = base_seed;
  summary.trials.resize(static_cast<std::size_t>(n_trials));
#pragma omp parallel for num_threads(config.jobs) schedule(dynamic, 1) if (config.jobs > 1)
  for (int t = 0; t < n_trials; ++t)
    summary.trials[static_cast<std::size_t>(t)] =
        run_trial(dataset, config, t, base_seed + static_cast<std::uint64_t>(t));

  std::string first_error;
  for (const auto& t : summary.trials)
    if (!t.ok) {
      ++summary.failed;
      log::warning("trial " + std::to_string(t.trial) + " failed: " + t.error);
      if (first_error.empty()) first_error = t.error;
    }
  if (2 * summary.failed > n_trials)
    fail(ErrorKind::kRunFailed, std::to_string(summary.failed) + " of " + std::to_string(n_trials) +
                                    " trials failed on " + dataset.name + "; first error: " + first_error);
  summary.aggregates = aggregate_trials(summary.trials, config.methods);
  return summary;
}

// ---------------------------------------------------------------------------
// Output

void write_results_jsonl(std::ostream& out, const RunSummary& summary) {
  using nlohmann::ordered_json;
  const std::string mode(to_string(summary.config.mode));
  for (const auto& t : summary.trials) {
    ordered_json j;
    j["type"] = "trial";
    j["dataset"] = summary.dataset;
    j["mode"] = mode;
    j["trial"] = t.trial;
    j["seed"] = t.seed;
    j["ok"] = t.ok;
    if (!t.ok) j["error"] = t.error;
    j["learners"] = ordered_json::array();
    for (const auto& c : t.learners) {
      ordered_json l;
      l["kind"] = std::string(to_string(c.kind));
      if (c.kind != LearnerKind::kGmm) l["width_multiplier"] = c.width_multiplier;
      if (c.kind == LearnerKind::kKpca) l["kpca_dim"] = c.kpca_dim;
      if (c.kind == LearnerKind::kGmm) l["gmm_components"] = c.gmm_components;
      l["validation_score"] = c.validation_score;
      j["learners"].push_back(l);
    }
    j["methods"] = ordered_json::array();
    for (const auto& o : t.methods) {
      ordered_json m;
      m["method"] = std::string(to_string(o.method));
      m["auc_roc"] = o.test.auc_roc;
      m["auc_pr"] = o.test.auc_pr;
      m["g_mean"] = o.test.g_mean;
      m["threshold"] = o.test.threshold;
      m["validation_score"] = o.validation_score;
      m["rho"] = o.rho;
      if (o.method == Method::kInteriorPoint || o.method == Method::kFrankWolfe) {
        m["p_base"] = o.p_base;
        m["epochs"] = o.epochs;
      }
      if (o.method == Method::kSingleBest) m["learner"] = o.single_best;
      j["methods"].push_back(m);
    }
    out << j.dump() << '\n';
  }
  for (const auto& a : summary.aggregates) {
    ordered_json j;
    j["type"] = "aggregate";
    j["dataset"] = summary.dataset;
    j["mode"] = mode;
    j["method"] = std::string(to_string(a.method));
    j["trials"] = a.auc_roc.count;
    for (const auto& [name, s] : {std::pair{"auc_roc", a.auc_roc}, std::pair{"auc_pr", a.auc_pr},
                                  std::pair{"g_mean", a.g_mean}})
      j[name] = {{"mean", s.mean}, {"std", s.stddev}};
    out << j.dump() << '\n';
  }
}

void write_timings_csv(std::ostream& out, const RunSummary& summary) {
  out << "dataset,trial,seed,phase,seconds\n";
  char buf[64];
  for (const auto& t : summary.trials)
    for (const auto& [phase, sec] : t.timings) {
      std::snprintf(buf, sizeof buf, "%.6f", sec);
      out << summary.dataset << ',' << t.trial << ',' << t.seed << ',' << phase << ',' << buf << '\n';
    }
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string pad(const std::string& s, std::size_t width) {
  return s + std::string(width > display_width(s) ? width - display_width(s) : 0, ' ');
}

}  // namespace

std::string render_table(std::span<const RunSummary> runs, std::string_view metric) {
  require(metric == "auc_roc" || metric == "auc_pr" || metric == "g_mean", ErrorKind::kInvalidInput,
          "unknown metric '" + std::string(metric) + "'");
  if (runs.empty()) return {};
  const auto& methods = runs.front().config.methods;
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"dataset"};
  for (Method m : methods) head.emplace_back(to_string(m));
  cells.push_back(head);
  char buf[64];
  for (const auto& r : runs) {
    std::vector<std::string> row{r.dataset};
    for (Method m : methods) {
      const auto& a = r.aggregate(m);
      const MetricSummary& s = metric == "auc_roc" ? a.auc_roc : (metric == "auc_pr" ? a.auc_pr : a.g_mean);
      std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * s.mean, 100.0 * s.stddev);
      row.emplace_back(buf);
    }
    cells.push_back(row);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], display_width(row[c]));
  std::ostringstream os;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c)
      os << (c ? "  " : "") << (c + 1 < cells[r].size() ? pad(cells[r][c], width[c]) : cells[r][c]);
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

FusionModel train_model(const Dataset& dataset, const ExperimentConfig& config, std::uint64_t seed,
                        OptimizerKind optimizer) {
  config.validate();
  const TrialContext ctx = prepare(dataset, config, seed);
  const FusedFit fit = fit_fused(ctx, optimizer);
  FusionModel model;
  model.scaler = ctx.scaler;
  model.learners = ctx.learners;
  model.normalizer = fit.normalizer;
  model.weights = fit.weights;
  model.anchor_rule = config.anchor_rule;
  model.threshold = fit.threshold;
  model.mode = config.mode;
  model.optimizer = optimizer;
  model.config = config.optimizer;
  model.config.p_base = fit.p_base;
  model.seed = seed;
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------
// Timing ablation

SyntheticProblem make_synthetic_problem(int n, int d, std::uint64_t seed) {
  require(n >= 2 && d >= 1, ErrorKind::kInvalidInput, "synthetic problem needs n >= 2 and d >= 1");
  SyntheticProblem p;
  p.scores.stage = ScoreStage::kZscored;
  p.scores.values.resize(n, d);
  for (int j = 0; j < d; ++j) p.scores.learner_ids.push_back("l" + std::to_string(j));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  p.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int y = i % 2 == 0 ? 1 : -1;
    p.labels[static_cast<std::size_t>(i)] = y;
    for (int j = 0; j < d; ++j) p.scores.values(i, j) = y * (0.5 + 0.25 * j) + noise(rng);
  }
  return p;
}

std::vector<AblationCell> timing_ablation(std::span<const double> p_values, std::span<const double> tolerances, int n,
                                          int d, std::uint64_t seed, int repeats) {
  require(repeats >= 1, ErrorKind::kInvalidInput, "repeats must be positive");
  for (double p : p_values)
    require(std::any_of(kPGrid.begin(), kPGrid.end(), [&](double g) { return std::abs(g - p) < 1e-12; }),
            ErrorKind::kInvalidInput, "ablation p must come from the p grid");
  for (double t : tolerances)
    require(std::any_of(kAblationTolerances.begin(), kAblationTolerances.end(),
                        [&](double g) { return std::abs(g - t) < 1e-15; }),
            ErrorKind::kInvalidInput, "ablation tolerance must be 1e-2, 1e-3 or 1e-4");
  const SyntheticProblem prob = make_synthetic_problem(n, d, seed);
  const Matrix no_features;
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  std::vector<AblationCell> cells;
  for (double p : p_values)
    for (double tol : tolerances) {
      OptimizerConfig oc;
      oc.p_base = p;
      oc.tolerance = tol;
      oc.locality_enabled = false;
      AblationCell cell;
      cell.p = p;
      cell.tolerance = tol;
      std::vector<double> ip_t, fw_t;
      for (int r = 0; r < repeats; ++r) {
        auto t0 = Clock::now();
        const auto ip = optimize_interior_point(prob.scores, no_features, prob.labels, oc, Exec::kSerial);
        ip_t.push_back(seconds_since(t0));
        t0 = Clock::now();
        const auto fw = optimize_frank_wolfe(prob.scores, prob.labels, p, oc);
        fw_t.push_back(seconds_since(t0));
        cell.ip_epochs = ip.epochs;
        cell.ip_converged = ip.converged;
        cell.fw_iterations = fw.iterations;
        cell.fw_converged = fw.converged;
      }
      cell.ip_seconds = median(ip_t);
      cell.fw_seconds = median(fw_t);
      cells.push_back(cell);
    }
  return cells;
}

namespace {

std::string p_label(double p) {
  static const std::pair<double, const char*> known[] = {{32.0 / 31.0, "32/31"}, {16.0 / 15.0, "16/15"},
                                                         {8.0 / 7.0, "8/7"},     {4.0 / 3.0, "4/3"}};
  for (const auto& [v, s] : known)
    if (std::abs(v - p) < 1e-12) return s;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

}  // namespace

void write_ablation_csv(std::ostream& out, std::span<const AblationCell> cells) {
  std::vector<double> ps, tols;
  for (const auto& c : cells) {
    if (std::find(ps.begin(), ps.end(), c.p) == ps.end()) ps.push_back(c.p);
    if (std::find(tols.begin(), tols.end(), c.tolerance) == tols.end()) tols.push_back(c.tolerance);
  }
  out << 'p';
  char buf[64];
  for (double t : tols) {
    std::snprintf(buf, sizeof buf, "%g", t);
    out << ",tol=" << buf;
  }
  out << '\n';
  for (double p : ps) {
    out << p_label(p);
    for (double t : tols) {
      out << ',';
      for (const auto& c : cells)
        if (c.p == p && c.tolerance == t) {
          const char* prefix = !c.fw_converged && !c.ip_converged ? "~" : (!c.fw_converged ? ">" : (!c.ip_converged ? "<" : ""));
          std::snprintf(buf, sizeof buf, "%s%.3f", prefix, c.ratio());
          out << buf;
        }
    }
    out << '\n';
  }
}

}  // namespace lpfusion
