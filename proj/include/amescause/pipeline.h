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

// End-to-end orchestration: raw CSV to alignment report.
//
// Every stage reads its inputs from and writes its outputs to one output
// directory. manifest.json records a content hash and the producing command
// of every artifact; a stage refuses inputs that are missing or whose bytes no
// longer match. After each command report.json (deterministic) and report.txt
// (human-readable, with timings) are rebuilt from the artifacts present.

#ifndef AMESCAUSE_PIPELINE_H_
#define AMESCAUSE_PIPELINE_H_

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amescause/causal.h"
#include "amescause/dataset.h"
#include "amescause/gbdt.h"

namespace amescause {

struct ModelConfig {
  std::vector<ModelFamily> families = {ModelFamily::kLeafWise,
                                       ModelFamily::kLevelWise};
  size_t n_trees = 500;
  double prior_weight = 1.0;
  size_t max_bin = kDefaultMaxBin;
  std::optional<GossParams> goss;
  bool tune = true;
  // Grids and fold count; `base` is filled from the fields above.
  GridSearchSpec grid;
  // Used when tune is false.
  LeafWise fixed_leafwise{8, 20, 10};
  double fixed_leafwise_learning_rate = 0.1;
  LevelWise fixed_levelwise{5, 5.0, 128};
  double fixed_levelwise_learning_rate = 0.05;
};

struct HeterogeneityConfig {
  std::string treatment = "HasPorch";
  size_t cate_max_depth = 2;
  size_t policy_max_depth = 2;
  size_t min_leaf = 20;
  double cost = 0.0;
};

struct CausalConfig {
  size_t folds = 5;
  // Empty means every feature.
  std::vector<std::string> treatments;
  size_t min_group_rows = 30;
  double min_residual_variance_ratio = 0.01;
  double alpha = 0.05;
  TrainParams nuisance = DefaultNuisanceParams();
  HeterogeneityConfig heterogeneity;
};

struct PipelineConfig {
  std::filesystem::path data;
  uint64_t seed = 42;
  size_t threads = 0;
  std::vector<ColumnSchema> schema;
  std::vector<std::string> drop_columns;
  double split_ratio = 0.8;
  ModelConfig model;
  size_t top_k = 0;
  CausalConfig causal;
  std::string whatif_feature = "HasPorch";
  std::string whatif_value = "1";
  bool union_mode = false;
  // Effective configuration after overrides, echoed into the report.
  std::string effective_json;
  // Published reference values, copied verbatim into the report.
  std::string reference_json;
};

// Command-line overrides applied on top of the config file.
struct ConfigOverrides {
  std::optional<std::string> data;
  std::optional<uint64_t> seed;
  std::optional<std::string> model;
  std::optional<size_t> top_k;
  std::optional<std::string> treatment;
  std::optional<std::string> value;
  std::optional<double> cost;
};

// Relative data paths are resolved against `base_dir`. Throws ConfigError on
// malformed or inconsistent settings.
PipelineConfig ParseConfig(std::string_view json_text,
                           const std::filesystem::path& base_dir,
                           const ConfigOverrides& overrides = {});
PipelineConfig LoadConfig(const std::filesystem::path& path,
                          const ConfigOverrides& overrides = {});

// Per-family training parameters for a fixed (untuned) run.
TrainParams FixedParams(const PipelineConfig& config, ModelFamily family);

enum class Command { kIngest, kTune, kTrain, kExplain, kCausal, kWhatIf, kAlign,
                     kAll };

std::string_view CommandName(Command command);
// Throws ConfigError for unknown names.
Command ParseCommand(std::string_view name);

// Runs one command; `all` runs ingest, tune (when enabled), train, explain,
// causal, whatif and align in order.
void RunCommand(Command command, const PipelineConfig& config,
                const std::filesystem::path& out_dir);

// 0 success, 2 ConfigError, 3 DataError, 4 anything else.
int ExitCodeFor(const std::exception& error);

// One-line JSON error record.
std::string ErrorRecord(std::string_view command, const std::exception& error);

// 64-bit FNV-1a as 16 lowercase hex digits.
std::string ContentHash(std::string_view bytes);

}  // namespace amescause

#endif  // AMESCAUSE_PIPELINE_H_
