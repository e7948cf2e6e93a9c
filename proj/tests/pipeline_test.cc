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

#include "amescause/pipeline.h"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "amescause/errors.h"
#include "json.hpp"

namespace amescause {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kSourceDir = AMESCAUSE_SOURCE_DIR;
const fs::path kCli = AMESCAUSE_CLI_PATH;

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json BaseConfig() {
  return json::parse(Slurp(kSourceDir / "config" / "ames.json"));
}

fs::path FreshDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("amescause_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int RunCli(const std::string& args) {
  const std::string command = kCli.string() + " " + args + " 2>/dev/null";
  const int status = std::system(command.c_str());
  return WEXITSTATUS(status);
}

TEST(ConfigTest, ShippedConfigParses) {
  const PipelineConfig config =
      LoadConfig(kSourceDir / "config" / "ames.json");
  EXPECT_EQ(config.data.filename(), "ames_train.csv");
  EXPECT_TRUE(fs::exists(config.data));
  EXPECT_EQ(config.seed, 42u);
  EXPECT_EQ(config.model.families.size(), 2u);
  EXPECT_TRUE(config.model.tune);
  EXPECT_EQ(config.split_ratio, 0.8);
  EXPECT_EQ(config.causal.heterogeneity.treatment, "HasPorch");
}

TEST(ConfigTest, RelativeDataResolvedAgainstBaseDir) {
  json j = BaseConfig();
  j["data"] = "sub/file.csv";
  const PipelineConfig config = ParseConfig(j.dump(), "/base");
  EXPECT_EQ(config.data, fs::path("/base/sub/file.csv"));
  j["data"] = "/abs/file.csv";
  EXPECT_EQ(ParseConfig(j.dump(), "/base").data, fs::path("/abs/file.csv"));
}

TEST(ConfigTest, RejectsMalformedSettings) {
  EXPECT_THROW(ParseConfig("{not json", "."), ConfigError);
  json j = BaseConfig();
  j["unknown_key"] = 1;
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["model"]["grid"]["learning_rat"] = {0.1};
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["split"]["ratio"] = 1.0;
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["model"]["family"] = "forest";
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["model"]["grid"]["max_depth"] = json::array();
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["model"]["goss"] = {{"enabled", true}, {"top_rate", 0.8},
                        {"other_rate", 0.5}};
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  j = BaseConfig();
  j["seed"] = "forty-two";
  EXPECT_THROW(ParseConfig(j.dump(), "."), ConfigError);
  EXPECT_THROW(LoadConfig("/nonexistent/config.json"), ConfigError);
}

TEST(ConfigTest, OverridesApply) {
  ConfigOverrides o;
  o.seed = 7;
  o.model = "levelwise";
  o.top_k = 5;
  o.treatment = "CentralAir";
  o.value = "Y";
  o.cost = 1000.0;
  const PipelineConfig config = ParseConfig(BaseConfig().dump(), ".", o);
  EXPECT_EQ(config.seed, 7u);
  ASSERT_EQ(config.model.families.size(), 1u);
  EXPECT_EQ(config.model.families[0], ModelFamily::kLevelWise);
  EXPECT_EQ(config.top_k, 5u);
  EXPECT_EQ(config.causal.heterogeneity.treatment, "CentralAir");
  EXPECT_EQ(config.whatif_feature, "CentralAir");
  EXPECT_EQ(config.whatif_value, "Y");
  EXPECT_EQ(config.causal.heterogeneity.cost, 1000.0);
  EXPECT_NE(config.effective_json.find("CentralAir"), std::string::npos);
}

TEST(CommandTest, NamesRoundTrip) {
  for (Command c : {Command::kIngest, Command::kTune, Command::kTrain,
                    Command::kExplain, Command::kCausal, Command::kWhatIf,
                    Command::kAlign, Command::kAll}) {
    EXPECT_EQ(ParseCommand(CommandName(c)), c);
  }
  EXPECT_THROW(ParseCommand("deploy"), ConfigError);
}

TEST(ContentHashTest, Fnv1aKnownValues) {
  EXPECT_EQ(ContentHash(""), "cbf29ce484222325");
  EXPECT_EQ(ContentHash("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(ContentHash("foobar"), "85944171f73967e8");
}

TEST(ErrorTest, ExitCodesAndRecords) {
  EXPECT_EQ(ExitCodeFor(ConfigError("x")), 2);
  EXPECT_EQ(ExitCodeFor(DataError("x")), 3);
  EXPECT_EQ(ExitCodeFor(StageError("x")), 4);
  EXPECT_EQ(ExitCodeFor(std::runtime_error("x")), 4);
  const json record = json::parse(ErrorRecord("train", DataError("bad row")));
  EXPECT_EQ(record["error"]["command"], "train");
  EXPECT_EQ(record["error"]["exit_code"], 3);
  EXPECT_EQ(record["error"]["kind"], "data_error");
  EXPECT_EQ(record["error"]["message"], "bad row");
}

// A small untuned configuration so the end-to-end test stays fast.
json SmallConfig() {
  json j = BaseConfig();
  j["data"] = (kSourceDir / "data" / "ames_train.csv").string();
  j["model"]["tune"] = false;
  j["model"]["n_trees"] = 40;
  j["causal"]["treatments"] = {"OverallQual", "GrLivArea", "CentralAir",
                               "HasPorch", "KitchenQual"};
  j["causal"]["nuisance"]["n_trees"] = 40;
  return j;
}

fs::path WriteConfig(const fs::path& dir, const json& j) {
  const fs::path path = dir / "config.json";
  std::ofstream(path) << j.dump(1);
  return path;
}

TEST(CliTest, ExitCodes) {
  const fs::path dir = FreshDir("cli_codes");
  const fs::path config = WriteConfig(dir, SmallConfig());
  const fs::path out = dir / "out";

  // A stage whose prerequisites are missing.
  EXPECT_EQ(RunCli("explain --config " + config.string() + " --out " +
                   out.string()),
            4);
  const json record = json::parse(Slurp(out / "error.json"));
  EXPECT_EQ(record["error"]["command"], "explain");
  EXPECT_NE(record["error"]["message"].get<std::string>().find("train"),
            std::string::npos);

  json bad = SmallConfig();
  bad["split"]["ratio"] = 2.0;
  const fs::path bad_dir = FreshDir("cli_bad_config");
  EXPECT_EQ(RunCli("ingest --config " + WriteConfig(bad_dir, bad).string() +
                   " --out " + (bad_dir / "out").string()),
            2);
  EXPECT_EQ(RunCli("ingest --config " + config.string() + " --out " +
                   out.string() + " --data " + (dir / "missing.csv").string()),
            3);
  EXPECT_EQ(RunCli("frobnicate"), 2);
}

TEST(CliTest, SmallEndToEndRun) {
  const fs::path dir = FreshDir("cli_e2e");
  const fs::path config = WriteConfig(dir, SmallConfig());
  const fs::path out = dir / "out";
  ASSERT_EQ(RunCli("all --config " + config.string() + " --out " +
                   out.string()),
            0);
  for (const char* name :
       {"cleaned.csv", "train.csv", "test.csv", "model_leafwise.json",
        "model_levelwise.json", "shap_leafwise.csv", "importance_levelwise.csv",
        "effects.csv", "cate_tree.txt", "policy_tree.txt", "report.json",
        "report.txt", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / name)) << name;
  }

  // Every manifest hash matches the bytes on disk.
  const json manifest = json::parse(Slurp(out / "manifest.json"));
  for (const auto& [name, entry] : manifest["artifacts"].items()) {
    EXPECT_EQ(entry["hash"], ContentHash(Slurp(out / name))) << name;
  }

  const json report = json::parse(Slurp(out / "report.json"));
  EXPECT_EQ(report["data"]["train_rows"].get<size_t>() +
                report["data"]["test_rows"].get<size_t>(),
            report["data"]["cleaned_rows"].get<size_t>());

  // The what-if changes exactly the porch-less test rows.
  const PipelineConfig parsed = ParseConfig(SmallConfig().dump(), dir);
  const Table cleaned =
      CleanTable(DeriveFeatures(LoadTable(parsed.data, parsed.schema)),
                 parsed.drop_columns);
  const Table test = Split(cleaned, parsed.split_ratio, parsed.seed).test;
  const Column& porch = test.column("HasPorch");
  size_t without = 0;
  for (size_t i = 0; i < test.num_rows(); ++i) {
    without += porch.CellText(i) == "0";
  }
  for (const char* family : {"leafwise", "levelwise"}) {
    EXPECT_EQ(report["models"][family]["whatif"]["n_affected"].get<size_t>(),
              without);
    const double rho = report["models"][family]["alignment"]["rho"];
    EXPECT_GE(rho, -1.0);
    EXPECT_LE(rho, 1.0);
  }
  const json& table = report["causal"]["significance"];
  ASSERT_FALSE(table.empty());
  for (size_t i = 1; i < table.size(); ++i) {
    EXPECT_LE(table[i - 1]["p_value"].get<double>(),
              table[i]["p_value"].get<double>());
  }

  // Editing an upstream artifact makes downstream stages refuse it.
  std::ofstream(out / "train.csv", std::ios::app) << "\n";
  EXPECT_EQ(RunCli("train --config " + config.string() + " --out " +
                   out.string()),
            4);
}

}  // namespace
}  // namespace amescause
