/*
 * Copyright 2026 The amescause Authors.
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

// amescause <command> [options]
//
// Commands: ingest, tune, train, explain, causal, whatif, align, all.
// Exit codes: 0 success, 2 config error, 3 data error, 4 stage failure. On
// failure a JSON error record goes to stderr and to <out>/error.json.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>

#include "CLI11.hpp"
#include "amescause/errors.h"
#include "amescause/pipeline.h"

namespace {

struct Options {
  std::string config = "config/ames.json";
  std::string out = "out";
  std::optional<std::string> data;
  std::optional<uint64_t> seed;
  std::optional<std::string> model;
  std::optional<size_t> top_k;
  std::optional<std::string> treatment;
  std::optional<std::string> value;
  std::optional<double> cost;
};

void AddOptions(CLI::App& app, Options& options) {
  app.add_option("--config", options.config, "Pipeline config (JSON)");
  app.add_option("--out", options.out, "Output directory");
  app.add_option("--data", options.data, "Input CSV, overrides the config");
  app.add_option("--seed", options.seed, "Seed for split, CV and fitting");
  app.add_option("--model", options.model, "Model family")
      ->check(CLI::IsMember({"leafwise", "levelwise", "both"}));
  app.add_option("--top-k", options.top_k,
                 "SHAP features compared (0 = all with nonzero importance)");
  app.add_option("--treatment", options.treatment,
                 "Feature for heterogeneity, policy and what-if analysis");
  app.add_option("--value", options.value, "What-if intervention value");
  app.add_option("--cost", options.cost, "Policy treatment cost");
}

void WriteErrorFile(const std::string& out, const std::string& record) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  std::ofstream file(std::filesystem::path(out) / "error.json");
  if (file) file << record << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Housing price GBDT, SHAP and causal alignment pipeline"};
  app.require_subcommand(1);
  Options options;
  std::string command_name;
  const std::pair<const char*, const char*> commands[] = {
      {"ingest", "Load, clean and split the data"},
      {"tune", "Grid search with cross-validation"},
      {"train", "Fit the final model on the train split"},
      {"explain", "SHAP values and global importance on the test split"},
      {"causal", "DML effects, CATE tree and policy tree"},
      {"whatif", "Mean predicted price under an intervention"},
      {"align", "Rank agreement between SHAP and causal effects"},
      {"all", "Run every stage in order"},
  };
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    AddOptions(*sub, options);
    sub->callback([&command_name, name] { command_name = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const amescause::Command command = amescause::ParseCommand(command_name);
    amescause::ConfigOverrides overrides;
    if (options.data) {
      // Resolved against the working directory, not the config file.
      overrides.data = std::filesystem::absolute(*options.data).string();
    }
    overrides.seed = options.seed;
    overrides.model = options.model;
    overrides.top_k = options.top_k;
    overrides.treatment = options.treatment;
    overrides.value = options.value;
    overrides.cost = options.cost;
    const amescause::PipelineConfig config =
        amescause::LoadConfig(options.config, overrides);
    amescause::RunCommand(command, config, options.out);
  } catch (const std::exception& e) {
    const std::string record = amescause::ErrorRecord(command_name, e);
    std::cerr << record << '\n';
    WriteErrorFile(options.out, record);
    return amescause::ExitCodeFor(e);
  }
  return 0;
}
