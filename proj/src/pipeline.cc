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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <set>
#include <sstream>

#include "amescause/alignment.h"
#include "amescause/errors.h"
#include "amescause/shap.h"
#include "json.hpp"

namespace amescause {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files and artifacts.

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void WriteFile(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw StageError("cannot write '" + path.string() + "'");
}

constexpr std::string_view kManifest = "manifest.json";

class Workspace {
 public:
  explicit Workspace(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (!fs::is_directory(dir_)) {
      throw StageError("cannot create output directory '" + dir_.string() +
                       "'");
    }
    const fs::path manifest = dir_ / kManifest;
    if (fs::exists(manifest)) {
      try {
        manifest_ = json::parse(ReadFile(manifest));
      } catch (const json::exception& e) {
        throw StageError(std::string("corrupt manifest: ") + e.what());
      }
    }
    if (!manifest_.is_object() || !manifest_.contains("artifacts")) {
      manifest_ = {{"artifacts", json::object()}};
    }
  }

  const fs::path& dir() const { return dir_; }

  void Write(const std::string& name, std::string_view content,
             Command producer) {
    WriteFile(dir_ / name, content);
    manifest_["artifacts"][name] = {{"hash", ContentHash(content)},
                                    {"command", CommandName(producer)}};
    WriteFile(dir_ / kManifest, manifest_.dump(1) + "\n");
  }

  void WriteJson(const std::string& name, const json& value,
                 Command producer) {
    Write(name, value.dump(1) + "\n", producer);
  }

  bool Has(const std::string& name) const {
    return manifest_["artifacts"].contains(name) && fs::exists(dir_ / name);
  }

  // Reads a tracked artifact, naming the producing command when it is absent
  // and refusing it when its bytes changed since it was written.
  std::string Read(const std::string& name, Command producer) const {
    const std::string hint = "; run `" + std::string(CommandName(producer)) +
                             "` first";
    if (!fs::exists(dir_ / name)) {
      throw StageError("missing artifact '" + name + "'" + hint);
    }
    if (!manifest_["artifacts"].contains(name)) {
      throw StageError("artifact '" + name + "' is not in the manifest" + hint);
    }
    std::string content = ReadFile(dir_ / name);
    const std::string expected =
        manifest_["artifacts"][name]["hash"].get<std::string>();
    if (ContentHash(content) != expected) {
      throw StageError("artifact '" + name +
                       "' does not match its recorded hash" + hint);
    }
    return content;
  }

  json ReadJson(const std::string& name, Command producer) const {
    return json::parse(Read(name, producer));
  }

 private:
  fs::path dir_;
  json manifest_;
};

// ---------------------------------------------------------------------------
// Config parsing.

void CheckKeys(const json& object, std::initializer_list<std::string_view> keys,
               const std::string& path) {
  if (!object.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (const auto& [key, value] : object.items()) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + path + "." + key + "'");
    }
  }
}

template <typename T>
T Get(const json& object, const std::string& key, T fallback,
      const std::string& path) {
  if (!object.contains(key)) return fallback;
  try {
    return object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + "." + key + "' has the wrong type");
  }
}

const json& Section(const json& object, const std::string& key) {
  static const json kEmpty = json::object();
  return object.contains(key) ? object.at(key) : kEmpty;
}

template <typename T>
void RequireNonEmpty(const std::vector<T>& values, const std::string& path) {
  if (values.empty()) throw ConfigError("'" + path + "' must not be empty");
}

std::vector<ModelFamily> ParseFamilies(const std::string& name) {
  if (name == "both") return {ModelFamily::kLeafWise, ModelFamily::kLevelWise};
  return {ParseFamily(name)};
}

void ApplyOverrides(json& j, const ConfigOverrides& o) {
  if (o.data) j["data"] = *o.data;
  if (o.seed) j["seed"] = *o.seed;
  if (o.model) j["model"]["family"] = *o.model;
  if (o.top_k) j["shap"]["top_k"] = *o.top_k;
  if (o.treatment) {
    j["causal"]["heterogeneity"]["treatment"] = *o.treatment;
    j["whatif"]["feature"] = *o.treatment;
  }
  if (o.value) j["whatif"]["value"] = *o.value;
  if (o.cost) j["causal"]["heterogeneity"]["cost"] = *o.cost;
}

// ---------------------------------------------------------------------------
// Parameter records.

json StrategyJson(const GrowthStrategy& strategy) {
  if (const auto* s = std::get_if<LeafWise>(&strategy)) {
    return {{"num_leaves", s->num_leaves},
            {"min_child_samples", s->min_child_samples},
            {"max_depth", s->max_depth}};
  }
  const auto& s = std::get<LevelWise>(strategy);
  return {{"depth", s.depth},
          {"l2_leaf_reg", s.l2_leaf_reg},
          {"border_count", s.border_count}};
}

json ParamsJson(const TrainParams& params) {
  json goss = nullptr;
  if (params.goss) {
    goss = {{"top_rate", params.goss->top_rate},
            {"other_rate", params.goss->other_rate}};
  }
  return {{"family", FamilyName(FamilyOf(params.strategy))},
          {"strategy", StrategyJson(params.strategy)},
          {"learning_rate", params.learning_rate},
          {"n_trees", params.n_trees},
          {"goss", goss},
          {"seed", params.seed},
          {"prior_weight", params.prior_weight},
          {"max_bin", params.max_bin}};
}

TrainParams ParamsFromJson(const json& j) {
  TrainParams params;
  const json& s = j.at("strategy");
  if (ParseFamily(j.at("family").get<std::string>()) == ModelFamily::kLeafWise) {
    params.strategy = LeafWise{s.at("num_leaves").get<size_t>(),
                               s.at("min_child_samples").get<size_t>(),
                               s.at("max_depth").get<size_t>()};
  } else {
    params.strategy = LevelWise{s.at("depth").get<size_t>(),
                                s.at("l2_leaf_reg").get<double>(),
                                s.at("border_count").get<size_t>()};
  }
  params.learning_rate = j.at("learning_rate").get<double>();
  params.n_trees = j.at("n_trees").get<size_t>();
  if (!j.at("goss").is_null()) {
    params.goss = GossParams{j.at("goss").at("top_rate").get<double>(),
                             j.at("goss").at("other_rate").get<double>()};
  }
  params.seed = j.at("seed").get<uint64_t>();
  params.prior_weight = j.at("prior_weight").get<double>();
  params.max_bin = j.at("max_bin").get<size_t>();
  return params;
}

TrainParams BaseParams(const PipelineConfig& config) {
  TrainParams params;
  params.n_trees = config.model.n_trees;
  params.goss = config.model.goss;
  params.seed = config.seed;
  params.prior_weight = config.model.prior_weight;
  params.max_bin = config.model.max_bin;
  return params;
}

std::string ModelFile(ModelFamily f) {
  return "model_" + std::string(FamilyName(f)) + ".json";
}
std::string TuneFile(ModelFamily f) {
  return "tune_" + std::string(FamilyName(f)) + ".json";
}
std::string TrainFile(ModelFamily f) {
  return "train_" + std::string(FamilyName(f)) + ".json";
}
std::string ExplainFile(ModelFamily f) {
  return "explain_" + std::string(FamilyName(f)) + ".json";
}

json SchemaJson(const std::vector<ColumnSchema>& schema) {
  json out = json::array();
  for (const auto& c : schema) {
    out.push_back({{"name", c.name},
                   {"kind", c.kind == ColumnKind::kNumeric ? "numeric"
                                                           : "categorical"},
                   {"role", c.role == ColumnRole::kTarget ? "target"
                            : c.role == ColumnRole::kId   ? "id"
                                                          : "feature"}});
  }
  return out;
}

std::vector<ColumnSchema> SchemaFromJson(const json& j) {
  std::vector<ColumnSchema> schema;
  for (const auto& c : j) {
    ColumnSchema column;
    column.name = c.at("name").get<std::string>();
    column.kind = c.at("kind") == "numeric" ? ColumnKind::kNumeric
                                            : ColumnKind::kCategorical;
    const std::string role = c.at("role").get<std::string>();
    column.role = role == "target" ? ColumnRole::kTarget
                  : role == "id"   ? ColumnRole::kId
                                   : ColumnRole::kFeature;
    schema.push_back(std::move(column));
  }
  return schema;
}

json EffectJson(const CausalEffect& e) {
  return {{"feature", e.feature}, {"contrast", e.contrast},
          {"ate", e.ate},         {"stderr", e.stderr},
          {"p_value", e.p_value}, {"num_rows", e.num_rows}};
}

json EffectTreeJson(const EffectTree& tree) {
  json nodes = json::array();
  for (const auto& node : tree.nodes) {
    json n = {{"count", node.count}, {"cate_mean", node.mean}};
    if (tree.policy) {
      n["net_effect"] = node.net_effect;
      if (node.is_leaf()) n["action"] = node.treat ? "treat" : "no-treat";
    }
    if (!node.is_leaf()) {
      const auto f = static_cast<size_t>(node.feature);
      n["feature"] = tree.feature_names[f];
      if (node.categorical) {
        n["level"] = tree.levels[f][static_cast<size_t>(node.level)];
      } else {
        n["threshold"] = node.threshold;
      }
      n["left"] = node.left;
      n["right"] = node.right;
      n["gain"] = node.gain;
    }
    nodes.push_back(std::move(n));
  }
  return {{"nodes", std::move(nodes)}, {"depth", tree.Depth()}};
}

// ---------------------------------------------------------------------------
// Stages.

class Runner {
 public:
  Runner(const PipelineConfig& config, const fs::path& out_dir)
      : config_(config), ws_(out_dir) {
    const fs::path timings = ws_.dir() / "timings.json";
    if (fs::exists(timings)) {
      try {
        timings_ = json::parse(ReadFile(timings));
      } catch (const json::exception&) {
        timings_ = json::object();
      }
    }
    if (!timings_.is_object()) timings_ = json::object();
  }

  void Run(Command command) {
    switch (command) {
      case Command::kIngest:
        Timed("ingest", [&] { Ingest(); });
        break;
      case Command::kTune:
        for (ModelFamily f : config_.model.families) {
          Timed("tune_" + std::string(FamilyName(f)), [&] { Tune(f); });
        }
        break;
      case Command::kTrain:
        for (ModelFamily f : config_.model.families) {
          Timed("train_" + std::string(FamilyName(f)), [&] { Train(f); });
        }
        break;
      case Command::kExplain:
        for (ModelFamily f : config_.model.families) {
          Timed("explain_" + std::string(FamilyName(f)), [&] { Explain(f); });
        }
        break;
      case Command::kCausal:
        Timed("causal", [&] { Causal(); });
        break;
      case Command::kWhatIf:
        Timed("whatif", [&] { WhatIfStage(); });
        break;
      case Command::kAlign:
        Timed("align", [&] { Align(); });
        break;
      case Command::kAll:
        Run(Command::kIngest);
        if (config_.model.tune) Run(Command::kTune);
        for (Command c : {Command::kTrain, Command::kExplain, Command::kCausal,
                          Command::kWhatIf, Command::kAlign}) {
          Run(c);
        }
        return;
    }
    WriteReport();
  }

 private:
  void Timed(const std::string& name, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    body();
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;
    timings_[name] = elapsed.count();
    WriteFile(ws_.dir() / "timings.json", timings_.dump(1) + "\n");
  }

  Table StageTable(const std::string& name) const {
    const json info = ws_.ReadJson("ingest.json", Command::kIngest);
    return ParseTable(ws_.Read(name, Command::kIngest),
                      SchemaFromJson(info.at("schema")));
  }

  Ensemble Model(ModelFamily f) const {
    return DeserializeEnsemble(ws_.Read(ModelFile(f), Command::kTrain));
  }

  void Ingest() {
    const std::string bytes = ReadFile(config_.data);
    const Table raw = ParseTable(bytes, config_.schema);
    const Table cleaned = CleanTable(DeriveFeatures(raw), config_.drop_columns);
    const SplitPair split = Split(cleaned, config_.split_ratio, config_.seed);
    ws_.Write("cleaned.csv", ToCsv(cleaned), Command::kIngest);
    ws_.Write("train.csv", ToCsv(split.train), Command::kIngest);
    ws_.Write("test.csv", ToCsv(split.test), Command::kIngest);
    const json info = {{"data_hash", ContentHash(bytes)},
                       {"source_rows", raw.num_rows()},
                       {"cleaned_rows", cleaned.num_rows()},
                       {"train_rows", split.train.num_rows()},
                       {"test_rows", split.test.num_rows()},
                       {"num_features", cleaned.FeatureNames().size()},
                       {"split_ratio", split.ratio},
                       {"split_seed", split.seed},
                       {"schema", SchemaJson(cleaned.schema())}};
    ws_.WriteJson("ingest.json", info, Command::kIngest);
  }

  void Tune(ModelFamily f) {
    const Table train = StageTable("train.csv");
    GridSearchSpec spec = config_.model.grid;
    spec.base = BaseParams(config_);
    const GridSearchResult result =
        GridSearch(train, spec, f, config_.threads);
    json table = json::array();
    for (const auto& row : result.table) {
      table.push_back({{"params", ParamsJson(row.params)},
                       {"fold_r2", row.fold_r2},
                       {"mean_r2", row.mean_r2}});
    }
    ws_.WriteJson(TuneFile(f),
                  {{"family", FamilyName(f)},
                   {"folds", spec.folds},
                   {"best", ParamsJson(result.best)},
                   {"best_score", result.best_score},
                   {"cv", std::move(table)}},
                  Command::kTune);
  }

  void Train(ModelFamily f) {
    TrainParams params;
    if (config_.model.tune) {
      params = ParamsFromJson(
          ws_.ReadJson(TuneFile(f), Command::kTune).at("best"));
    } else {
      params = FixedParams(config_, f);
    }
    const Table train = StageTable("train.csv");
    const Table test = StageTable("test.csv");
    const FitResult fit = Fit(train, params);
    const double test_r2 =
        R2Score(fit.model.Predict(test), test.target().values);
    const double train_r2 =
        R2Score(fit.model.Predict(train), train.target().values);
    ws_.Write(ModelFile(f), SerializeEnsemble(fit.model), Command::kTrain);
    ws_.WriteJson(TrainFile(f),
                  {{"family", FamilyName(f)},
                   {"params", ParamsJson(params)},
                   {"tuned", config_.model.tune},
                   {"test_r2", test_r2},
                   {"train_r2", train_r2},
                   {"final_train_rmse", fit.train_rmse.back()}},
                  Command::kTrain);
  }

  void Explain(ModelFamily f) {
    const Ensemble model = Model(f);
    const Table test = StageTable("test.csv");
    const ShapMatrix shap = ExplainEnsemble(model, test, config_.threads);
    const std::vector<double> predictions = model.Predict(test);
    double max_residual = 0.0;
    for (size_t i = 0; i < shap.num_rows; ++i) {
      double total = shap.base_value;
      for (double v : shap.row(i)) total += v;
      max_residual = std::max(
          max_residual,
          std::abs(total - predictions[i]) / std::abs(predictions[i]));
    }
    const ImportanceRanking ranking = GlobalImportance(shap);
    std::vector<std::string> ids;
    for (size_t i = 0; i < test.num_rows(); ++i) {
      ids.push_back(test.id().CellText(i));
    }
    const std::string family(FamilyName(f));
    ws_.Write("shap_" + family + ".csv", ShapMatrixCsv(shap, ids),
              Command::kExplain);
    ws_.Write("importance_" + family + ".csv", RankingCsv(ranking),
              Command::kExplain);
    json ranking_json = json::array();
    for (const auto& entry : ranking) {
      ranking_json.push_back({{"feature", entry.feature},
                              {"score", entry.score}});
    }
    ws_.WriteJson(ExplainFile(f),
                  {{"family", family},
                   {"rows", shap.num_rows},
                   {"base_value", shap.base_value},
                   {"max_relative_additivity_residual", max_residual},
                   {"ranking", std::move(ranking_json)}},
                  Command::kExplain);
  }

  void Causal() {
    const Table train = StageTable("train.csv");
    const std::string outcome = train.target().schema.name;
    std::vector<std::string> treatments = config_.causal.treatments;
    if (treatments.empty()) treatments = train.FeatureNames();
    DmlOptions options;
    options.folds = config_.causal.folds;
    options.seed = config_.seed;
    options.nuisance = config_.causal.nuisance;
    options.min_group_rows = config_.causal.min_group_rows;
    options.min_residual_variance_ratio =
        config_.causal.min_residual_variance_ratio;

    const EffectsResult effects =
        EstimateEffects(train, treatments, outcome, options, config_.threads);
    const std::vector<CausalEffect> table = SignificanceTable(effects.effects);
    if (table.empty()) throw StageError("no causal effect could be estimated");
    ws_.Write("effects.csv", EffectsCsv(table), Command::kCausal);

    const HeterogeneityConfig& het = config_.causal.heterogeneity;
    const TreatmentSpec spec = InferTreatment(train, het.treatment);
    if (spec.kind != TreatmentKind::kBinary) {
      throw ConfigError("heterogeneity treatment '" + het.treatment +
                        "' is not a 0/1 feature");
    }
    const std::vector<ContrastFit> fits =
        FitContrasts(train, spec, outcome, options);
    const ContrastFit& fit = fits.front();
    const std::vector<double> psi = PseudoOutcomes(fit);
    const std::vector<std::string> drop = {het.treatment};
    const Covariates x =
        MakeCovariates(train.SelectRows(fit.rows).DropColumns(drop));
    const CateTree cate =
        FitCateTree(psi, x, {het.cate_max_depth, het.min_leaf});
    const PolicyTree policy =
        FitPolicyTree(psi, x, het.cost, {het.policy_max_depth, het.min_leaf});
    double treat_all = 0.0;
    for (double p : psi) treat_all += p - het.cost;
    double psi_mean = 0.0;
    for (double p : psi) psi_mean += p;
    psi_mean /= static_cast<double>(psi.size());
    ws_.Write("cate_tree.txt", cate.ToText(), Command::kCausal);
    ws_.Write("policy_tree.txt", policy.ToText(), Command::kCausal);

    json effects_json = json::array();
    for (const auto& e : table) effects_json.push_back(EffectJson(e));
    json skipped = json::array();
    for (const auto& s : effects.skipped) {
      skipped.push_back({{"feature", s.feature}, {"reason", s.reason}});
    }
    json policy_json = EffectTreeJson(policy);
    policy_json["cost"] = het.cost;
    policy_json["net_benefit"] = PolicyNetBenefit(policy, psi, x, het.cost);
    policy_json["treat_all_benefit"] = treat_all;
    policy_json["treat_none_benefit"] = 0.0;
    ws_.WriteJson(
        "causal.json",
        {{"outcome", outcome},
         {"folds", options.folds},
         {"nuisance", ParamsJson(options.nuisance)},
         {"alpha", config_.causal.alpha},
         {"significance", std::move(effects_json)},
         {"skipped", std::move(skipped)},
         {"rank_list", CausalRankList(table, config_.causal.alpha)},
         {"heterogeneity",
          {{"treatment", het.treatment},
           {"effect", EffectJson(fit.effect)},
           {"pseudo_outcome_mean", psi_mean},
           {"cate_tree", EffectTreeJson(cate)},
           {"policy_tree", std::move(policy_json)}}}},
        Command::kCausal);
  }

  void WhatIfStage() {
    const Table test = StageTable("test.csv");
    json models = json::object();
    for (ModelFamily f : config_.model.families) {
      const WhatIfResult r = WhatIf(Model(f), test, config_.whatif_feature,
                                    config_.whatif_value);
      models[std::string(FamilyName(f))] = {
          {"baseline_mean", r.baseline_mean},
          {"counterfactual_mean", r.counterfactual_mean},
          {"n_affected", r.n_affected}};
    }
    ws_.WriteJson("whatif.json",
                  {{"feature", config_.whatif_feature},
                   {"value", config_.whatif_value},
                   {"rows", test.num_rows()},
                   {"models", std::move(models)}},
                  Command::kWhatIf);
  }

  static ImportanceRanking RankingFrom(const json& explain) {
    ImportanceRanking ranking;
    for (const auto& entry : explain.at("ranking")) {
      ranking.push_back({entry.at("feature").get<std::string>(),
                         entry.at("score").get<double>()});
    }
    return ranking;
  }

  void Align() {
    const json causal = ws_.ReadJson("causal.json", Command::kCausal);
    const auto causal_list =
        causal.at("rank_list").get<std::vector<std::string>>();
    std::vector<ImportanceRanking> rankings;
    for (ModelFamily f : config_.model.families) {
      rankings.push_back(
          RankingFrom(ws_.ReadJson(ExplainFile(f), Command::kExplain)));
    }
    AlignOptions options;
    options.top_k = config_.top_k;
    options.union_mode = config_.union_mode;
    json models = json::object();
    for (size_t k = 0; k < rankings.size(); ++k) {
      const AlignmentResult r =
          AlignReport(rankings[k], causal_list, options, rankings);
      models[std::string(FamilyName(config_.model.families[k]))] = {
          {"causal", r.causal},
          {"importance", r.importance},
          {"common", r.common},
          {"causal_ranks", r.causal_ranks},
          {"importance_ranks", r.importance_ranks},
          {"differences", r.differences},
          {"n", r.n},
          {"rho", r.rho}};
    }
    ws_.WriteJson("alignment.json",
                  {{"top_k", config_.top_k},
                   {"union_mode", config_.union_mode},
                   {"models", std::move(models)}},
                  Command::kAlign);
  }

  // -------------------------------------------------------------------------
  // Report.

  std::optional<json> Optional(const std::string& name, Command producer) {
    if (!ws_.Has(name)) return std::nullopt;
    return ws_.ReadJson(name, producer);
  }

  void WriteReport() {
    json report;
    report["config"] = json::parse(config_.effective_json);
    report["reference"] = json::parse(config_.reference_json);
    if (auto ingest = Optional("ingest.json", Command::kIngest)) {
      ingest->erase("schema");
      report["data"] = *ingest;
    }
    const auto causal = Optional("causal.json", Command::kCausal);
    const auto whatif = Optional("whatif.json", Command::kWhatIf);
    const auto alignment = Optional("alignment.json", Command::kAlign);
    if (causal) report["causal"] = *causal;

    json models = json::object();
    for (ModelFamily f : {ModelFamily::kLeafWise, ModelFamily::kLevelWise}) {
      const std::string family(FamilyName(f));
      json m = json::object();
      if (auto tune = Optional(TuneFile(f), Command::kTune)) m["tuning"] = *tune;
      if (auto train = Optional(TrainFile(f), Command::kTrain)) {
        m["training"] = *train;
      }
      if (auto explain = Optional(ExplainFile(f), Command::kExplain)) {
        m["explain"] = *explain;
      }
      if (whatif && whatif->at("models").contains(family)) {
        m["whatif"] = whatif->at("models").at(family);
      }
      if (alignment && alignment->at("models").contains(family)) {
        m["alignment"] = alignment->at("models").at(family);
      }
      if (!m.empty()) models[family] = std::move(m);
    }
    report["models"] = models;

    // Direction check of the what-if shift against the estimated effect.
    if (causal && whatif) {
      json agreement = json::object();
      const std::string feature = whatif->at("feature").get<std::string>();
      const std::string value = whatif->at("value").get<std::string>();
      std::optional<double> ate;
      for (const auto& e : causal->at("significance")) {
        const std::string contrast = e.at("contrast").get<std::string>();
        if (e.at("feature") == feature &&
            (contrast == "num" || contrast.rfind(value + " v ", 0) == 0)) {
          ate = e.at("ate").get<double>();
        }
      }
      agreement["feature"] = feature;
      agreement["value"] = value;
      agreement["ate"] = ate ? json(*ate) : json(nullptr);
      for (const auto& [family, r] : whatif->at("models").items()) {
        const double delta = r.at("counterfactual_mean").get<double>() -
                             r.at("baseline_mean").get<double>();
        const bool agrees =
            ate && ((delta > 0 && *ate > 0) || (delta < 0 && *ate < 0) ||
                    (delta == 0 && *ate == 0));
        agreement["models"][family] = {{"delta", delta}, {"agrees", agrees}};
      }
      report["whatif_direction"] = agreement;
    }
    WriteFile(ws_.dir() / "report.json", report.dump(1) + "\n");
    WriteFile(ws_.dir() / "report.txt", ReportText(report));
  }

  std::string ReportText(const json& report) const {
    std::ostringstream out;
    out << "amescause report\n================\n";
    if (report.contains("data")) {
      const json& d = report["data"];
      out << "rows: source " << d["source_rows"] << ", cleaned "
          << d["cleaned_rows"] << ", train " << d["train_rows"] << ", test "
          << d["test_rows"] << "; features " << d["num_features"] << "\n";
    }
    for (const auto& [family, m] : report["models"].items()) {
      out << "\n[" << family << "]\n";
      if (m.contains("tuning")) {
        out << "  best CV R^2 " << m["tuning"]["best_score"] << " with "
            << m["tuning"]["best"].dump() << "\n";
      }
      if (m.contains("training")) {
        out << "  test R^2 " << m["training"]["test_r2"] << " (reference "
            << report["reference"]["test_r2"].value(family, json()) << ")\n";
      }
      if (m.contains("explain")) {
        out << "  top SHAP features:";
        const json& ranking = m["explain"]["ranking"];
        for (size_t i = 0; i < std::min<size_t>(10, ranking.size()); ++i) {
          out << " " << ranking[i]["feature"].get<std::string>();
        }
        out << "\n  max relative additivity residual "
            << m["explain"]["max_relative_additivity_residual"] << "\n";
      }
      if (m.contains("whatif")) {
        out << "  what-if mean price " << m["whatif"]["baseline_mean"]
            << " -> " << m["whatif"]["counterfactual_mean"] << " ("
            << m["whatif"]["n_affected"] << " rows changed)\n";
      }
      if (m.contains("alignment")) {
        out << "  Spearman rho " << m["alignment"]["rho"] << " over "
            << m["alignment"]["n"] << " common features (reference "
            << report["reference"]["rho"].value(family, json()) << ")\n";
      }
    }
    if (report.contains("causal")) {
      const json& c = report["causal"];
      out << "\ncausal effects (most significant first)\n";
      const json& table = c["significance"];
      for (size_t i = 0; i < std::min<size_t>(15, table.size()); ++i) {
        out << "  " << table[i]["feature"].get<std::string>() << " ["
            << table[i]["contrast"].get<std::string>() << "] ate "
            << table[i]["ate"] << " p " << table[i]["p_value"] << "\n";
      }
      out << "  " << c["skipped"].size() << " treatments or contrasts skipped\n";
      const json& h = c["heterogeneity"];
      out << "\n" << h["treatment"].get<std::string>()
          << " heterogeneity: ate " << h["effect"]["ate"] << ", policy net "
          << h["policy_tree"]["net_benefit"] << " vs treat-all "
          << h["policy_tree"]["treat_all_benefit"] << "\n";
    }
    if (report.contains("whatif_direction")) {
      out << "\nwhat-if direction vs ATE: "
          << report["whatif_direction"].dump() << "\n";
    }
    out << "\ntimings (seconds)\n";
    for (const auto& [stage, seconds] : timings_.items()) {
      out << "  " << stage << " " << seconds << "\n";
    }
    return out.str();
  }

  const PipelineConfig& config_;
  Workspace ws_;
  json timings_ = json::object();
};

}  // namespace

PipelineConfig ParseConfig(std::string_view json_text,
                           const fs::path& base_dir,
                           const ConfigOverrides& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  CheckKeys(j,
            {"data", "seed", "threads", "schema", "drop_columns", "split",
             "model", "shap", "causal", "whatif", "alignment", "reference"},
            "config");
  ApplyOverrides(j, overrides);

  PipelineConfig config;
  const std::string data = Get<std::string>(j, "data", "", "config");
  if (data.empty()) throw ConfigError("config key 'data' is required");
  config.data = fs::path(data).is_absolute() ? fs::path(data) : base_dir / data;
  config.seed = Get<uint64_t>(j, "seed", 42, "config");
  config.threads = Get<size_t>(j, "threads", 0, "config");

  const json& schema = Section(j, "schema");
  CheckKeys(schema, {"id", "target", "categorical", "numeric"}, "schema");
  const auto id = Get<std::string>(schema, "id", "", "schema");
  const auto target = Get<std::string>(schema, "target", "", "schema");
  if (id.empty() || target.empty() || id == target) {
    throw ConfigError("schema needs distinct 'id' and 'target' columns");
  }
  std::set<std::string> seen;
  auto add = [&](const std::string& name, ColumnKind kind, ColumnRole role) {
    if (!seen.insert(name).second) {
      throw ConfigError("schema lists column '" + name + "' twice");
    }
    config.schema.push_back({name, kind, role});
  };
  add(id, ColumnKind::kNumeric, ColumnRole::kId);
  add(target, ColumnKind::kNumeric, ColumnRole::kTarget);
  for (const auto& name : Get<std::vector<std::string>>(
           schema, "numeric", {}, "schema")) {
    add(name, ColumnKind::kNumeric, ColumnRole::kFeature);
  }
  for (const auto& name : Get<std::vector<std::string>>(
           schema, "categorical", {}, "schema")) {
    add(name, ColumnKind::kCategorical, ColumnRole::kFeature);
  }
  config.drop_columns = Get<std::vector<std::string>>(
      j, "drop_columns", DefaultDropColumns(), "config");

  const json& split = Section(j, "split");
  CheckKeys(split, {"ratio"}, "split");
  config.split_ratio = Get<double>(split, "ratio", 0.8, "split");
  if (!(config.split_ratio > 0.0 && config.split_ratio < 1.0)) {
    throw ConfigError("split.ratio must be in (0, 1)");
  }

  const json& model = Section(j, "model");
  CheckKeys(model,
            {"family", "n_trees", "prior_weight", "max_bin", "goss", "tune",
             "cv_folds", "grid", "fixed"},
            "model");
  ModelConfig& m = config.model;
  m.families = ParseFamilies(Get<std::string>(model, "family", "both", "model"));
  m.n_trees = Get<size_t>(model, "n_trees", 500, "model");
  if (m.n_trees < 1) throw ConfigError("model.n_trees must be >= 1");
  m.prior_weight = Get<double>(model, "prior_weight", 1.0, "model");
  m.max_bin = Get<size_t>(model, "max_bin", kDefaultMaxBin, "model");
  if (m.max_bin < 2 || m.max_bin > 65535) {
    throw ConfigError("model.max_bin must be in [2, 65535]");
  }
  const json& goss = Section(model, "goss");
  CheckKeys(goss, {"enabled", "top_rate", "other_rate"}, "model.goss");
  if (Get<bool>(goss, "enabled", false, "model.goss")) {
    m.goss = GossParams{Get<double>(goss, "top_rate", 0.2, "model.goss"),
                        Get<double>(goss, "other_rate", 0.1, "model.goss")};
    if (m.goss->top_rate < 0 || m.goss->other_rate < 0 ||
        m.goss->top_rate + m.goss->other_rate > 1.0) {
      throw ConfigError("model.goss rates must satisfy a, b >= 0, a + b <= 1");
    }
  }
  m.tune = Get<bool>(model, "tune", true, "model");
  m.grid.folds = Get<size_t>(model, "cv_folds", 5, "model");
  if (m.grid.folds < 2) throw ConfigError("model.cv_folds must be >= 2");
  const json& grid = Section(model, "grid");
  CheckKeys(grid,
            {"learning_rate", "max_depth", "min_child_samples", "l2_leaf_reg",
             "border_count"},
            "model.grid");
  m.grid.learning_rates = Get<std::vector<double>>(
      grid, "learning_rate", m.grid.learning_rates, "model.grid");
  m.grid.max_depths =
      Get<std::vector<size_t>>(grid, "max_depth", m.grid.max_depths, "model.grid");
  m.grid.min_child_samples = Get<std::vector<size_t>>(
      grid, "min_child_samples", m.grid.min_child_samples, "model.grid");
  m.grid.l2_leaf_regs = Get<std::vector<double>>(
      grid, "l2_leaf_reg", m.grid.l2_leaf_regs, "model.grid");
  m.grid.border_counts = Get<std::vector<size_t>>(
      grid, "border_count", m.grid.border_counts, "model.grid");
  RequireNonEmpty(m.grid.learning_rates, "model.grid.learning_rate");
  RequireNonEmpty(m.grid.max_depths, "model.grid.max_depth");
  RequireNonEmpty(m.grid.min_child_samples, "model.grid.min_child_samples");
  RequireNonEmpty(m.grid.l2_leaf_regs, "model.grid.l2_leaf_reg");
  RequireNonEmpty(m.grid.border_counts, "model.grid.border_count");

  const json& fixed = Section(model, "fixed");
  CheckKeys(fixed, {"leafwise", "levelwise"}, "model.fixed");
  const json& leaf = Section(fixed, "leafwise");
  CheckKeys(leaf,
            {"learning_rate", "num_leaves", "min_child_samples", "max_depth"},
            "model.fixed.leafwise");
  m.fixed_leafwise_learning_rate =
      Get<double>(leaf, "learning_rate", 0.1, "model.fixed.leafwise");
  m.fixed_leafwise.num_leaves =
      Get<size_t>(leaf, "num_leaves", 8, "model.fixed.leafwise");
  m.fixed_leafwise.min_child_samples =
      Get<size_t>(leaf, "min_child_samples", 20, "model.fixed.leafwise");
  m.fixed_leafwise.max_depth =
      Get<size_t>(leaf, "max_depth", 10, "model.fixed.leafwise");
  const json& level = Section(fixed, "levelwise");
  CheckKeys(level, {"learning_rate", "depth", "l2_leaf_reg", "border_count"},
            "model.fixed.levelwise");
  m.fixed_levelwise_learning_rate =
      Get<double>(level, "learning_rate", 0.05, "model.fixed.levelwise");
  m.fixed_levelwise.depth = Get<size_t>(level, "depth", 5, "model.fixed.levelwise");
  m.fixed_levelwise.l2_leaf_reg =
      Get<double>(level, "l2_leaf_reg", 5.0, "model.fixed.levelwise");
  m.fixed_levelwise.border_count =
      Get<size_t>(level, "border_count", 128, "model.fixed.levelwise");
  try {
    ValidateStrategy(m.fixed_leafwise);
    ValidateStrategy(m.fixed_levelwise);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model.fixed: ") + e.what());
  }

  const json& shap = Section(j, "shap");
  CheckKeys(shap, {"top_k"}, "shap");
  config.top_k = Get<size_t>(shap, "top_k", 0, "shap");
  if (config.top_k == 1) throw ConfigError("shap.top_k must be 0 or >= 2");

  const json& causal = Section(j, "causal");
  CheckKeys(causal,
            {"folds", "treatments", "min_group_rows",
             "min_residual_variance_ratio", "alpha", "nuisance",
             "heterogeneity"},
            "causal");
  CausalConfig& c = config.causal;
  c.folds = Get<size_t>(causal, "folds", 5, "causal");
  if (c.folds < 2) throw ConfigError("causal.folds must be >= 2");
  c.treatments =
      Get<std::vector<std::string>>(causal, "treatments", {}, "causal");
  c.min_group_rows = Get<size_t>(causal, "min_group_rows", 30, "causal");
  c.min_residual_variance_ratio =
      Get<double>(causal, "min_residual_variance_ratio", 0.01, "causal");
  if (!(c.min_residual_variance_ratio >= 0.0)) {
    throw ConfigError("causal.min_residual_variance_ratio must be >= 0");
  }
  c.alpha = Get<double>(causal, "alpha", 0.05, "causal");
  if (!(c.alpha > 0.0)) throw ConfigError("causal.alpha must be > 0");
  const json& nuisance = Section(causal, "nuisance");
  CheckKeys(nuisance,
            {"depth", "n_trees", "learning_rate", "l2_leaf_reg", "border_count"},
            "causal.nuisance");
  LevelWise nuisance_strategy{
      Get<size_t>(nuisance, "depth", 3, "causal.nuisance"),
      Get<double>(nuisance, "l2_leaf_reg", 1.0, "causal.nuisance"),
      Get<size_t>(nuisance, "border_count", 32, "causal.nuisance")};
  try {
    ValidateStrategy(nuisance_strategy);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("causal.nuisance: ") + e.what());
  }
  c.nuisance.strategy = nuisance_strategy;
  c.nuisance.n_trees = Get<size_t>(nuisance, "n_trees", 200, "causal.nuisance");
  c.nuisance.learning_rate =
      Get<double>(nuisance, "learning_rate", 0.1, "causal.nuisance");
  c.nuisance.seed = config.seed;
  const json& het = Section(causal, "heterogeneity");
  CheckKeys(het,
            {"treatment", "cate_max_depth", "policy_max_depth", "min_leaf",
             "cost"},
            "causal.heterogeneity");
  c.heterogeneity.treatment = Get<std::string>(het, "treatment", "HasPorch",
                                               "causal.heterogeneity");
  c.heterogeneity.cate_max_depth =
      Get<size_t>(het, "cate_max_depth", 2, "causal.heterogeneity");
  c.heterogeneity.policy_max_depth =
      Get<size_t>(het, "policy_max_depth", 2, "causal.heterogeneity");
  c.heterogeneity.min_leaf =
      Get<size_t>(het, "min_leaf", 20, "causal.heterogeneity");
  c.heterogeneity.cost = Get<double>(het, "cost", 0.0, "causal.heterogeneity");
  if (c.heterogeneity.cate_max_depth < 1 ||
      c.heterogeneity.policy_max_depth < 1 || c.heterogeneity.min_leaf < 1) {
    throw ConfigError("causal.heterogeneity depths and min_leaf must be >= 1");
  }
  if (!(c.heterogeneity.cost >= 0.0)) {
    throw ConfigError("causal.heterogeneity.cost must be >= 0");
  }

  const json& whatif = Section(j, "whatif");
  CheckKeys(whatif, {"feature", "value"}, "whatif");
  config.whatif_feature =
      Get<std::string>(whatif, "feature", "HasPorch", "whatif");
  config.whatif_value = Get<std::string>(whatif, "value", "1", "whatif");

  const json& alignment = Section(j, "alignment");
  CheckKeys(alignment, {"union_mode"}, "alignment");
  config.union_mode = Get<bool>(alignment, "union_mode", false, "alignment");

  config.reference_json = Section(j, "reference").dump();
  json echo = j;
  echo.erase("reference");
  config.effective_json = echo.dump();
  return config;
}

PipelineConfig LoadConfig(const fs::path& path,
                          const ConfigOverrides& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return ParseConfig(buffer.str(), path.parent_path(), overrides);
}

TrainParams FixedParams(const PipelineConfig& config, ModelFamily family) {
  TrainParams params = BaseParams(config);
  if (family == ModelFamily::kLeafWise) {
    params.strategy = config.model.fixed_leafwise;
    params.learning_rate = config.model.fixed_leafwise_learning_rate;
  } else {
    params.strategy = config.model.fixed_levelwise;
    params.learning_rate = config.model.fixed_levelwise_learning_rate;
  }
  return params;
}

std::string_view CommandName(Command command) {
  switch (command) {
    case Command::kIngest:
      return "ingest";
    case Command::kTune:
      return "tune";
    case Command::kTrain:
      return "train";
    case Command::kExplain:
      return "explain";
    case Command::kCausal:
      return "causal";
    case Command::kWhatIf:
      return "whatif";
    case Command::kAlign:
      return "align";
    case Command::kAll:
      return "all";
  }
  return "all";
}

Command ParseCommand(std::string_view name) {
  for (Command c : {Command::kIngest, Command::kTune, Command::kTrain,
                    Command::kExplain, Command::kCausal, Command::kWhatIf,
                    Command::kAlign, Command::kAll}) {
    if (CommandName(c) == name) return c;
  }
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

void RunCommand(Command command, const PipelineConfig& config,
                const fs::path& out_dir) {
  Runner(config, out_dir).Run(command);
}

int ExitCodeFor(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return 2;
  if (dynamic_cast<const DataError*>(&error)) return 3;
  return 4;
}

std::string ErrorRecord(std::string_view command, const std::exception& error) {
  const int code = ExitCodeFor(error);
  const char* kind = code == 2 ? "config_error"
                     : code == 3 ? "data_error"
                                 : "stage_error";
  const json record = {{"error",
                        {{"command", command},
                         {"exit_code", code},
                         {"kind", kind},
                         {"message", error.what()}}}};
  return record.dump();
}

std::string ContentHash(std::string_view bytes) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = kHex[hash & 0xF];
    hash >>= 4;
  }
  return out;
}

}  // namespace amescause
