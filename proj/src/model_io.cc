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

// Model file layout:
//
//   {
//     "format": "amescause-ensemble", "version": 1,
//     "base_score": <double>, "learning_rate": <double>,
//     "strategy": {"type": "leafwise", "num_leaves", "min_child_samples",
//                  "max_depth"}
//               | {"type": "levelwise", "depth", "l2_leaf_reg",
//                  "border_count"},
//     "features": [{"name", "encoding": "numeric" | "categorical_codes" |
//                   "ordered_target", "levels", "level_target_sums",
//                   "level_counts", "prior", "prior_weight"}],
//     "trees": [{"nodes": [<pre-order node>...]}]
//   }
//
// Leaf nodes carry {"feature": -1, "value", "cover"}; split nodes add
// "threshold" or "left_levels", "left", "right" and "gain".

#include <fstream>
#include <sstream>

#include "amescause/errors.h"
#include "amescause/gbdt.h"
#include "json.hpp"

namespace amescause {
namespace {

using nlohmann::json;

constexpr std::string_view kFormat = "amescause-ensemble";
constexpr int kVersion = 1;

std::string_view EncodingName(FeatureEncoding encoding) {
  switch (encoding) {
    case FeatureEncoding::kNumeric:
      return "numeric";
    case FeatureEncoding::kCategoricalCodes:
      return "categorical_codes";
    case FeatureEncoding::kOrderedTarget:
      return "ordered_target";
  }
  return "numeric";
}

FeatureEncoding ParseEncoding(const std::string& name) {
  if (name == "numeric") return FeatureEncoding::kNumeric;
  if (name == "categorical_codes") return FeatureEncoding::kCategoricalCodes;
  if (name == "ordered_target") return FeatureEncoding::kOrderedTarget;
  throw DataError("unknown feature encoding '" + name + "'");
}

json StrategyToJson(const GrowthStrategy& strategy) {
  if (const auto* leaf_wise = std::get_if<LeafWise>(&strategy)) {
    return {{"type", "leafwise"},
            {"num_leaves", leaf_wise->num_leaves},
            {"min_child_samples", leaf_wise->min_child_samples},
            {"max_depth", leaf_wise->max_depth}};
  }
  const auto& level_wise = std::get<LevelWise>(strategy);
  return {{"type", "levelwise"},
          {"depth", level_wise.depth},
          {"l2_leaf_reg", level_wise.l2_leaf_reg},
          {"border_count", level_wise.border_count}};
}

GrowthStrategy StrategyFromJson(const json& j) {
  if (j.at("type") == "leafwise") {
    return LeafWise{j.at("num_leaves").get<size_t>(),
                    j.at("min_child_samples").get<size_t>(),
                    j.at("max_depth").get<size_t>()};
  }
  if (j.at("type") == "levelwise") {
    return LevelWise{j.at("depth").get<size_t>(),
                     j.at("l2_leaf_reg").get<double>(),
                     j.at("border_count").get<size_t>()};
  }
  throw DataError("unknown strategy type");
}

json NodeToJson(const TreeNode& node) {
  json j = {{"feature", node.feature},
            {"value", node.value},
            {"cover", node.cover}};
  if (node.is_leaf()) return j;
  if (node.categorical) {
    j["left_levels"] = node.left_levels;
  } else {
    j["threshold"] = node.threshold;
  }
  j["left"] = node.left;
  j["right"] = node.right;
  j["gain"] = node.gain;
  return j;
}

TreeNode NodeFromJson(const json& j) {
  TreeNode node;
  node.feature = j.at("feature").get<int32_t>();
  node.value = j.at("value").get<double>();
  node.cover = j.at("cover").get<double>();
  if (node.is_leaf()) return node;
  if (j.contains("left_levels")) {
    node.categorical = true;
    node.left_levels = j.at("left_levels").get<std::vector<int32_t>>();
  } else {
    node.threshold = j.at("threshold").get<double>();
  }
  node.left = j.at("left").get<int32_t>();
  node.right = j.at("right").get<int32_t>();
  node.gain = j.at("gain").get<double>();
  return node;
}

}  // namespace

std::string SerializeEnsemble(const Ensemble& model) {
  json features = json::array();
  for (const auto& spec : model.features()) {
    json f = {{"name", spec.name}, {"encoding", EncodingName(spec.encoding)}};
    if (spec.encoding != FeatureEncoding::kNumeric) f["levels"] = spec.levels;
    if (spec.encoding == FeatureEncoding::kOrderedTarget) {
      f["level_target_sums"] = spec.level_target_sums;
      f["level_counts"] = spec.level_counts;
      f["prior"] = spec.prior;
      f["prior_weight"] = spec.prior_weight;
    }
    features.push_back(std::move(f));
  }
  json trees = json::array();
  for (const auto& tree : model.trees()) {
    json nodes = json::array();
    for (const auto& node : tree.nodes) nodes.push_back(NodeToJson(node));
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  const json j = {{"format", kFormat},
                  {"version", kVersion},
                  {"base_score", model.base_score()},
                  {"learning_rate", model.learning_rate()},
                  {"strategy", StrategyToJson(model.strategy())},
                  {"features", std::move(features)},
                  {"trees", std::move(trees)}};
  return j.dump(1);
}

Ensemble DeserializeEnsemble(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != kFormat || j.at("version") != kVersion) {
      throw DataError("not an amescause ensemble file (version " +
                      std::to_string(kVersion) + ")");
    }
    std::vector<FeatureSpec> features;
    for (const auto& f : j.at("features")) {
      FeatureSpec spec;
      spec.name = f.at("name").get<std::string>();
      spec.encoding = ParseEncoding(f.at("encoding").get<std::string>());
      if (f.contains("levels")) {
        spec.levels = f.at("levels").get<std::vector<std::string>>();
      }
      if (spec.encoding == FeatureEncoding::kOrderedTarget) {
        spec.level_target_sums =
            f.at("level_target_sums").get<std::vector<double>>();
        spec.level_counts = f.at("level_counts").get<std::vector<double>>();
        spec.prior = f.at("prior").get<double>();
        spec.prior_weight = f.at("prior_weight").get<double>();
      }
      features.push_back(std::move(spec));
    }
    std::vector<Tree> trees;
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& node : t.at("nodes")) {
        tree.nodes.push_back(NodeFromJson(node));
      }
      trees.push_back(std::move(tree));
    }
    return Ensemble(std::move(features), j.at("base_score").get<double>(),
                    j.at("learning_rate").get<double>(),
                    StrategyFromJson(j.at("strategy")), std::move(trees));
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid model: ") + e.what());
  }
}

void SaveEnsemble(const Ensemble& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model '" + path.string() + "'");
  out << SerializeEnsemble(model) << '\n';
}

Ensemble LoadEnsemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return DeserializeEnsemble(buffer.str());
}

}  // namespace amescause
