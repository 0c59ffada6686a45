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


#include "lpfusion/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpfusion/error.hpp"
#include "lpfusion/evaluation.hpp"
#include "lpfusion/experiment.hpp"
#include "lpfusion/log.hpp"
#include "lpfusion/serialize.hpp"

#ifndef LPFUSION_VERSION
#define LPFUSION_VERSION "0.0.0"
#endif

namespace lpfusion::cli {

namespace {

const std::vector<std::string> kModes = {"pure-rpau", "pure-pseudoneg", "nonpure"};
const std::vector<std::string> kOptimizers = {"interior-point", "frank-wolfe", "ip", "fw"};
const std::vector<std::string> kLevels = {"debug", "info", "warning", "error", "off"};

struct Options {
  std::string log_level = "warning";
  std::string output_format = "table";
  std::string output;
  std::uint64_t seed = 0;

  std::vector<std::string> datasets;
  std::vector<std::string> schemas;
  std::string mode = "pure-rpau";
  int trials = 10;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string timings;
  std::string metric = "auc_roc";
  std::string optimizer = "interior-point";
  std::string model;

  ExperimentConfig experiment;
  std::vector<std::string> methods;

  int n = 500;
  int d = 4;
  int repeats = 3;
  std::vector<double> ablation_p{kAblationP.begin(), kAblationP.end()};
  std::vector<double> ablation_tol{kAblationTolerances.begin(), kAblationTolerances.end()};

  std::string table;
};

void add_common(CLI::App* sub, Options& o, bool with_format) {
  sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
  sub->add_option("-o,--output", o.output, "Write the result here instead of stdout");
  if (with_format)
    sub->add_option("--output-format", o.output_format, "Result format")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();
}

void add_data(CLI::App* sub, Options& o) {
  sub->add_option("--dataset", o.datasets, "Dataset CSV (repeatable)")->required();
  sub->add_option("--schema", o.schemas,
                  "Schema JSON per dataset (default: the dataset path with a .json extension)");
}

void add_experiment(CLI::App* sub, Options& o) {
  ExperimentConfig& c = o.experiment;
  OptimizerConfig& oc = c.optimizer;
  sub->add_option("--mode", o.mode, "Training scenario and tuning criterion")
      ->check(CLI::IsMember(kModes))
      ->capture_default_str();
  sub->add_option("--p-grid", c.p_grid, "Candidate base p values")->delimiter(',');
  sub->add_option("--rho-grid", c.rho_grid, "Candidate trim percentiles")->delimiter(',');
  sub->add_option("--width-multipliers", c.width_multipliers, "Kernel width multipliers")->delimiter(',');
  sub->add_option("--gmm-components", c.gmm_components, "Candidate GMM component counts")->delimiter(',');
  sub->add_option("--learner-rho", c.learner_rho, "Percentile used to tune single learners")->capture_default_str();
  sub->add_option("--pseudo-fraction", c.pseudo_fraction, "Share of validation rows negated")->capture_default_str();
  sub->add_option("--mu0", oc.mu0, "Initial barrier weight")->capture_default_str();
  sub->add_option("--beta", oc.beta, "Barrier decay per epoch")->capture_default_str();
  sub->add_option("--learning-rate", oc.learning_rate, "Interior-point step size")->capture_default_str();
  sub->add_option("--max-epochs", oc.max_epochs, "Optimizer iteration cap")->capture_default_str();
  sub->add_option("--tolerance", oc.tolerance, "Optimizer stopping tolerance")->capture_default_str();
  sub->add_option("--locality-k", oc.locality_k, "Neighbours used for local dispersion")->capture_default_str();
  sub->add_flag_callback("--no-locality", [&oc] { oc.locality_enabled = false; },
                         "One shared weight vector instead of per-sample weights");
  sub->add_option("--anchor-neighbors", c.anchor_rule.neighbors, "Minimum anchors averaged per test sample")
      ->capture_default_str();
  sub->add_option("--anchor-fraction", c.anchor_rule.neighbor_fraction, "Share of anchors averaged per test sample")
      ->capture_default_str();
  sub->add_option("--train-ratio", c.ratios.train, "Share of normals used for training")->capture_default_str();
  sub->add_option("--validation-ratio", c.ratios.validation, "Share of normals used for validation")
      ->capture_default_str();
  sub->add_option("--anomaly-reserve", c.ratios.anomaly_reserve, "Nonpure: share of anomalies held for test")
      ->capture_default_str();
  sub->add_option("--anomaly-train-share", c.ratios.anomaly_train_share,
                  "Nonpure: share of the remaining anomalies used for training")
      ->capture_default_str();
}

std::string default_schema(const std::string& csv) {
  const auto dot = csv.find_last_of('.');
  const auto slash = csv.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return csv + ".json";
  return csv.substr(0, dot) + ".json";
}

Dataset load(const Options& o, std::size_t i) {
  const std::string schema = i < o.schemas.size() ? o.schemas[i] : default_schema(o.datasets[i]);
  return load_dataset(o.datasets[i], load_schema(schema));
}

void check_schemas(const Options& o) {
  if (!o.schemas.empty() && o.schemas.size() != o.datasets.size())
    throw CLI::ValidationError("--schema", "give one schema per dataset or none");
}

ExperimentConfig experiment_config(const Options& o) {
  ExperimentConfig c = o.experiment;
  c.mode = fusion_mode_from_string(o.mode);
  c.jobs = o.jobs;
  if (!o.methods.empty()) {
    c.methods.clear();
    for (const auto& m : o.methods) c.methods.push_back(method_from_string(m));
  }
  c.validate();
  return c;
}

// Writes to --output when given, otherwise to `out`.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) {
    if (path.empty()) {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      require(file_->good(), ErrorKind::kIoError, "cannot open '" + path + "' for writing");
      stream_ = file_.get();
    }
  }
  std::ostream& operator*() { return *stream_; }
  void finish() {
    stream_->flush();
    require(stream_->good(), ErrorKind::kIoError, "write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

int run_fit(const Options& o, std::ostream& out) {
  if (o.datasets.size() != 1) throw CLI::ValidationError("--dataset", "fit takes exactly one dataset");
  const Dataset ds = load(o, 0);
  const FusionModel model = train_model(ds, experiment_config(o), o.seed, optimizer_kind_from_string(o.optimizer));
  Sink sink(o.output, out);
  save_model(*sink, model);
  sink.finish();
  if (!o.output.empty())
    out << "model written to " << o.output << " (p_base " << model.config.p_base << ", rho " << model.normalizer.rho
        << ", threshold " << fmt(model.threshold) << ")\n";
  return kExitOk;
}

int run_eval(const Options& o, std::ostream& out) {
  if (o.datasets.size() != 1) throw CLI::ValidationError("--dataset", "eval takes exactly one dataset");
  const FusionModel model = load_model(o.model);
  const Dataset ds = load(o, 0);
  const Vector s = predict(model, ds.features);
  const std::vector<double> scores(s.data(), s.data() + s.size());
  const EvalReport r = evaluate(scores, ds.labels, model.threshold);
  Sink sink(o.output, out);
  if (o.output_format == "json") {
    nlohmann::ordered_json j;
    j["dataset"] = ds.name;
    j["samples"] = ds.size();
    j["auc_roc"] = r.auc_roc;
    j["auc_pr"] = r.auc_pr;
    j["g_mean"] = r.g_mean;
    j["threshold"] = r.threshold;
    *sink << j.dump() << '\n';
  } else {
    *sink << "dataset    " << ds.name << '\n'
          << "samples    " << ds.size() << '\n'
          << "auc_roc    " << fmt(r.auc_roc) << '\n'
          << "auc_pr     " << fmt(r.auc_pr) << '\n'
          << "g_mean     " << fmt(r.g_mean) << '\n'
          << "threshold  " << fmt(r.threshold) << '\n';
  }
  sink.finish();
  return kExitOk;
}

int run_bench(const Options& o, std::ostream& out, std::ostream& err) {
  check_schemas(o);
  const ExperimentConfig config = experiment_config(o);
  std::vector<RunSummary> runs;
  int status = kExitOk;
  for (std::size_t i = 0; i < o.datasets.size(); ++i) {
    try {
      const Dataset ds = load(o, i);
      runs.push_back(run_trials(ds, config, o.trials, o.seed));
    } catch (const Error& e) {
      if (o.datasets.size() == 1) throw;
      err << "lpfusion: " << o.datasets[i] << ": " << e.what() << '\n';
      status = kExitFailure;
    }
  }
  Sink sink(o.output, out);
  if (o.output_format == "json") {
    for (const auto& r : runs) write_results_jsonl(*sink, r);
  } else {
    *sink << render_table(runs, o.metric);
  }
  sink.finish();
  if (!o.timings.empty()) {
    Sink t(o.timings, out);
    bool first = true;
    for (const auto& r : runs) {
      std::ostringstream buf;
      write_timings_csv(buf, r);
      std::string text = buf.str();
      if (!first) text.erase(0, text.find('\n') + 1);
      *t << text;
      first = false;
    }
    t.finish();
  }
  return status;
}

int run_ablate(const Options& o, std::ostream& out) {
  const auto cells = timing_ablation(o.ablation_p, o.ablation_tol, o.n, o.d, o.seed, o.repeats);
  Sink sink(o.output, out);
  write_ablation_csv(*sink, cells);
  sink.finish();
  return kExitOk;
}

int run_ranktest(const Options& o, std::ostream& out) {
  const RankTable table = read_rank_table(o.table);
  const RankTestResult r = skillings_mack(table);
  Sink sink(o.output, out);
  if (o.output_format == "json") {
    nlohmann::ordered_json j;
    j["statistic"] = r.statistic;
    j["p_value"] = r.p_value;
    j["dof"] = r.dof;
    nlohmann::ordered_json ranks;
    for (std::size_t m = 0; m < table.methods.size(); ++m) ranks[table.methods[m]] = r.mean_ranks[m];
    j["mean_ranks"] = ranks;
    j["skipped_datasets"] = r.skipped_datasets;
    *sink << j.dump() << '\n';
  } else {
    std::vector<std::size_t> order(table.methods.size());
    for (std::size_t m = 0; m < order.size(); ++m) order[m] = m;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.mean_ranks[a] < r.mean_ranks[b]; });
    std::size_t width = 6;
    for (const auto& m : table.methods) width = std::max(width, m.size());
    *sink << "statistic " << fmt(r.statistic) << "  dof " << r.dof << "  p-value " << fmt(r.p_value) << '\n';
    for (std::size_t m : order)
      *sink << "  " << table.methods[m] << std::string(width - table.methods[m].size() + 2, ' ')
            << fmt(r.mean_ranks[m]) << '\n';
    for (const auto& s : r.skipped_datasets) *sink << "skipped " << s << '\n';
  }
  sink.finish();
  return kExitOk;
}

log::Level level_from_string(const std::string& s) {
  if (s == "debug") return log::Level::kDebug;
  if (s == "info") return log::Level::kInfo;
  if (s == "error") return log::Level::kError;
  if (s == "off") return log::Level::kOff;
  return log::Level::kWarning;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Locally adaptive one-class classifier fusion", "lpfusion"};
  app.set_version_flag("--version", std::string("lpfusion ") + LPFUSION_VERSION);
  app.require_subcommand(1);
  app.add_option("--log-level", o.log_level, "Diagnostics on stderr")
      ->check(CLI::IsMember(kLevels))
      ->capture_default_str();
  app.add_option("-j,--jobs", o.jobs, "Trials run concurrently")->check(CLI::PositiveNumber)->capture_default_str();

  auto* fit = app.add_subcommand("fit", "Tune on one split and save a deployable model");
  add_data(fit, o);
  add_experiment(fit, o);
  add_common(fit, o, false);
  fit->add_option("--optimizer", o.optimizer, "Weight optimizer")->check(CLI::IsMember(kOptimizers))
      ->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Score a dataset with a saved model");
  eval->add_option("--model", o.model, "Model file written by fit")->required();
  add_data(eval, o);
  add_common(eval, o, true);

  auto* bench = app.add_subcommand("bench", "Repeated trials per dataset with every method");
  add_data(bench, o);
  add_experiment(bench, o);
  add_common(bench, o, true);
  bench->add_option("--trials", o.trials, "Trials per dataset")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--methods", o.methods, "Subset of methods")->delimiter(',');
  bench->add_option("--metric", o.metric, "Metric shown in the table")
      ->check(CLI::IsMember({"auc_roc", "auc_pr", "g_mean"}))
      ->capture_default_str();
  bench->add_option("--timings", o.timings, "Per-phase wall-clock CSV");

  auto* ablate = app.add_subcommand("ablate", "Interior-point vs Frank-Wolfe timing table");
  ablate->add_option("--n", o.n, "Samples")->check(CLI::Range(2, 1000000))->capture_default_str();
  ablate->add_option("--d", o.d, "Learners")->check(CLI::Range(1, 1000))->capture_default_str();
  ablate->add_option("--repeats", o.repeats, "Timed runs per cell")->check(CLI::PositiveNumber)
      ->capture_default_str();
  ablate->add_option("--p", o.ablation_p, "Rows (values from the p grid)")->delimiter(',');
  ablate->add_option("--tolerances", o.ablation_tol, "Columns")->delimiter(',');
  add_common(ablate, o, false);

  auto* rank = app.add_subcommand("ranktest", "Skillings-Mack test on a datasets x methods table");
  rank->add_option("--table", o.table, "CSV with one row per dataset and one column per method")->required();
  add_common(rank, o, true);

  for (auto* sub : {fit, eval, bench, ablate, rank}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "lpfusion: " << e.what() << "\n\n";
    CLI::App* shown = &app;
    for (auto* sub : app.get_subcommands()) shown = sub;
    err << shown->help();
    return kExitUsage;
  }

  log::set_level(level_from_string(o.log_level));
  try {
    if (*fit) return run_fit(o, out);
    if (*eval) return run_eval(o, out);
    if (*bench) return run_bench(o, out, err);
    if (*ablate) return run_ablate(o, out);
    return run_ranktest(o, out);
  } catch (const CLI::ValidationError& e) {
    err << "lpfusion: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "lpfusion: " << e.what() << '\n';
    return e.kind() == ErrorKind::kInvalidInput ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "lpfusion: " << e.what() << '\n';
    return kExitFailure;
  }
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace lpfusion::cli
