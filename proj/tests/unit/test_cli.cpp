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


#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "lpfusion/cli.hpp"

using lpfusion::cli::dispatch;
using lpfusion::cli::kExitFailure;
using lpfusion::cli::kExitOk;
using lpfusion::cli::kExitUsage;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.insert(args.begin(), {"--log-level", "off"});
  const int status = dispatch(args, out, err);
  return {status, out.str(), err.str()};
}

const std::string kIris = std::string(LPFUSION_DATA_DIR) + "/iris.csv";

std::vector<std::string> small_grid() {
  return {"--p-grid", "2,100", "--rho-grid", "5", "--width-multipliers", "0.5", "--gmm-components", "1",
          "--max-epochs", "30"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).status == kExitUsage);
  CHECK(run({"--frobnicate"}).status == kExitUsage);
  CHECK(run({"bench", "--frobnicate"}).status == kExitUsage);
  CHECK(run({"bench"}).status == kExitUsage);
  CHECK(run({"bench", "--dataset", kIris, "--mode", "sideways"}).status == kExitUsage);
  CHECK(run({"bench", "--dataset", kIris, "--trials", "0"}).status == kExitUsage);
  CHECK(run({"bench", "--dataset", kIris, "--p-grid", "0.5"}).status == kExitUsage);
  CHECK(run({"fit", "--dataset", kIris, "--dataset", kIris}).status == kExitUsage);
  const Run r = run({"bench", "--dataset", kIris, "--frobnicate"});
  CHECK(r.status == kExitUsage);
  CHECK(r.err.find("frobnicate") != std::string::npos);
  CHECK(r.err.find("--dataset") != std::string::npos);
}

TEST_CASE("runtime failures exit with 1") {
  CHECK(run({"bench", "--dataset", "/nonexistent/data.csv"}).status == kExitFailure);
  CHECK(run({"eval", "--model", "/nonexistent/model.json", "--dataset", kIris}).status == kExitFailure);
  CHECK(run({"ranktest", "--table", "/nonexistent/table.csv"}).status == kExitFailure);
}

TEST_CASE("help lists every flag") {
  const Run top = run({"--help"});
  CHECK(top.status == kExitOk);
  for (const char* s : {"fit", "eval", "bench", "ablate", "ranktest", "--log-level", "--jobs", "--version"})
    CHECK_MESSAGE(top.out.find(s) != std::string::npos, s);
  const Run bench = run({"bench", "--help"});
  CHECK(bench.status == kExitOk);
  for (const char* s : {"--dataset", "--schema", "--mode", "--p-grid", "--rho-grid", "--width-multipliers",
                        "--gmm-components", "--learner-rho", "--pseudo-fraction", "--mu0", "--beta",
                        "--learning-rate", "--max-epochs", "--tolerance", "--locality-k", "--no-locality",
                        "--anchor-neighbors", "--anchor-fraction", "--train-ratio", "--validation-ratio",
                        "--anomaly-reserve", "--anomaly-train-share", "--seed", "--output", "--output-format",
                        "--trials", "--methods", "--metric", "--timings"})
    CHECK_MESSAGE(bench.out.find(s) != std::string::npos, s);
  const Run ablate = run({"ablate", "--help"});
  for (const char* s : {"--n", "--d", "--repeats", "--p", "--tolerances"})
    CHECK_MESSAGE(ablate.out.find(s) != std::string::npos, s);
  CHECK(run({"--version"}).out.find("lpfusion") != std::string::npos);
}

TEST_CASE("fit then eval") {
  const std::string model = temp_path("lpfusion_cli_model.json");
  const Run fit = run(with({"fit", "--dataset", kIris, "--optimizer", "frank-wolfe", "-o", model}, small_grid()));
  REQUIRE_MESSAGE(fit.status == kExitOk, fit.err);
  CHECK(fit.out.find("model written to") != std::string::npos);
  const Run eval = run({"eval", "--model", model, "--dataset", kIris, "--output-format", "json"});
  REQUIRE_MESSAGE(eval.status == kExitOk, eval.err);
  CHECK(eval.out.find("\"auc_roc\"") != std::string::npos);
  CHECK(eval.out.find("\"samples\":150") != std::string::npos);
  const Run table = run({"eval", "--model", model, "--dataset", kIris});
  CHECK(table.out.find("auc_roc") != std::string::npos);
  std::filesystem::remove(model);
}

TEST_CASE("bench output is deterministic") {
  const auto args = with({"bench", "--dataset", kIris, "--trials", "2", "--seed", "4", "--methods",
                          "interior_point,frank_wolfe,sum_rule", "--output-format", "json"},
                         small_grid());
  const Run a = run(args);
  REQUIRE_MESSAGE(a.status == kExitOk, a.err);
  std::vector<std::string> parallel = args;
  parallel.insert(parallel.begin(), {"--jobs", "2"});
  const Run b = run(parallel);
  CHECK(a.out == b.out);
  CHECK(std::count(a.out.begin(), a.out.end(), '\n') == 2 + 3);
  const Run t = run(with({"bench", "--dataset", kIris, "--trials", "1", "--methods", "sum_rule"}, small_grid()));
  CHECK(t.status == kExitOk);
  CHECK(t.out.find("iris") != std::string::npos);
}

TEST_CASE("ranktest") {
  const std::string path = temp_path("lpfusion_cli_ranks.csv");
  std::ofstream(path) << "dataset,a,b,c\nd0,0.9,0.8,0.7\nd1,0.95,0.85,0.6\nd2,0.9,0.7,0.8\nd3,0.99,0.9,\n";
  const Run r = run({"ranktest", "--table", path, "--output-format", "json"});
  REQUIRE_MESSAGE(r.status == kExitOk, r.err);
  CHECK(r.out.find("\"p_value\"") != std::string::npos);
  CHECK(r.out.find("\"a\":1.0") != std::string::npos);
  const Run t = run({"ranktest", "--table", path});
  CHECK(t.out.find("statistic") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("ablate") {
  const Run r = run({"ablate", "--n", "60", "--d", "2", "--repeats", "1", "--p", "2", "--tolerances", "0.01"});
  REQUIRE_MESSAGE(r.status == kExitOk, r.err);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
  CHECK(run({"ablate", "--p", "3"}).status == kExitUsage);
}
