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

#include "amescause/shap.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <set>
#include <stdexcept>

#include "amescause/parallel.h"

namespace amescause {
namespace {

// One entry of the unique-feature path from the root to the current node.
struct PathElement {
  int32_t feature = -1;
  // Fraction of the "feature unknown" flow that reaches this point.
  double zero_fraction = 1.0;
  // 1 if x follows this branch, 0 otherwise.
  double one_fraction = 1.0;
  // Permutation weight of coalitions of each size.
  double weight = 0.0;
};

using Path = std::vector<PathElement>;

void ExtendPath(Path& path, double zero_fraction, double one_fraction,
                int32_t feature) {
  const size_t depth = path.size();
  path.push_back({feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0});
  const auto denominator = static_cast<double>(depth + 1);
  for (size_t i = depth; i-- > 0;) {
    path[i + 1].weight +=
        one_fraction * path[i].weight * static_cast<double>(i + 1) / denominator;
    path[i].weight =
        zero_fraction * path[i].weight * static_cast<double>(depth - i) /
        denominator;
  }
}

// Removes element `index` and undoes its effect on the weights.
void UnwindPath(Path& path, size_t index) {
  const size_t depth = path.size() - 1;
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  const auto denominator = static_cast<double>(depth + 1);
  double next_one_portion = path[depth].weight;
  for (size_t i = depth; i-- > 0;) {
    if (one_fraction != 0.0) {
      const double saved = path[i].weight;
      path[i].weight =
          next_one_portion * denominator /
          (static_cast<double>(i + 1) * one_fraction);
      next_one_portion =
          saved - path[i].weight * zero_fraction *
                      static_cast<double>(depth - i) / denominator;
    } else {
      path[i].weight = path[i].weight * denominator /
                       (zero_fraction * static_cast<double>(depth - i));
    }
  }
  for (size_t i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
  path.pop_back();
}

// Total weight of the path as if element `index` had been unwound.
double UnwoundPathSum(const Path& path, size_t index) {
  const size_t depth = path.size() - 1;
  const double one_fraction = path[index].one_fraction;
  const double zero_fraction = path[index].zero_fraction;
  const auto denominator = static_cast<double>(depth + 1);
  double total = 0.0;
  if (one_fraction != 0.0) {
    double next_one_portion = path[depth].weight;
    for (size_t i = depth; i-- > 0;) {
      const double tmp =
          next_one_portion / (static_cast<double>(i + 1) * one_fraction);
      total += tmp;
      next_one_portion = path[i].weight - tmp * zero_fraction *
                                              static_cast<double>(depth - i);
    }
  } else {
    for (size_t i = depth; i-- > 0;) {
      total += path[i].weight /
               (zero_fraction * static_cast<double>(depth - i));
    }
  }
  return total * denominator;
}

void Recurse(const Tree& tree, std::span<const double> x, size_t node_index,
             Path path, double zero_fraction, double one_fraction,
             int32_t feature, std::vector<double>& phi) {
  ExtendPath(path, zero_fraction, one_fraction, feature);
  const TreeNode& node = tree.nodes[node_index];
  if (node.is_leaf()) {
    for (size_t i = 1; i < path.size(); ++i) {
      const double weight = UnwoundPathSum(path, i);
      phi[static_cast<size_t>(path[i].feature)] +=
          weight * (path[i].one_fraction - path[i].zero_fraction) * node.value;
    }
    return;
  }

  const auto left = static_cast<size_t>(node.left);
  const auto right = static_cast<size_t>(node.right);
  const bool goes_left = node.GoesLeft(x[static_cast<size_t>(node.feature)]);
  const size_t hot = goes_left ? left : right;
  const size_t cold = goes_left ? right : left;
  const double hot_fraction = tree.nodes[hot].cover / node.cover;
  const double cold_fraction = tree.nodes[cold].cover / node.cover;

  // A feature already on the path is merged rather than added twice.
  double incoming_zero = 1.0;
  double incoming_one = 1.0;
  for (size_t i = 1; i < path.size(); ++i) {
    if (path[i].feature == node.feature) {
      incoming_zero = path[i].zero_fraction;
      incoming_one = path[i].one_fraction;
      UnwindPath(path, i);
      break;
    }
  }
  Recurse(tree, x, hot, path, incoming_zero * hot_fraction, incoming_one,
          node.feature, phi);
  Recurse(tree, x, cold, std::move(path), incoming_zero * cold_fraction, 0.0,
          node.feature, phi);
}

void CheckCovers(const Tree& tree) {
  if (tree.nodes.empty()) throw std::invalid_argument("empty tree");
  for (size_t i = 0; i < tree.nodes.size(); ++i) {
    if (!(tree.nodes[i].cover > 0.0)) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " has zero cover; the model is invalid");
    }
  }
}

double ConditionalExpectationAt(const Tree& tree, std::span<const double> x,
                                const std::vector<bool>& coalition,
                                size_t node_index) {
  const TreeNode& node = tree.nodes[node_index];
  if (node.is_leaf()) return node.value;
  const auto left = static_cast<size_t>(node.left);
  const auto right = static_cast<size_t>(node.right);
  const auto feature = static_cast<size_t>(node.feature);
  if (coalition[feature]) {
    return ConditionalExpectationAt(
        tree, x, coalition, node.GoesLeft(x[feature]) ? left : right);
  }
  return (tree.nodes[left].cover *
              ConditionalExpectationAt(tree, x, coalition, left) +
          tree.nodes[right].cover *
              ConditionalExpectationAt(tree, x, coalition, right)) /
         node.cover;
}

std::string FormatDouble(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

}  // namespace

TreeShapResult TreeShapSingle(const Tree& tree, std::span<const double> x,
                              size_t num_features) {
  CheckCovers(tree);
  TreeShapResult result;
  result.contributions.assign(num_features, 0.0);
  result.expected_value = tree.ExpectedValue();
  if (tree.nodes.front().is_leaf()) return result;
  Path path;
  path.reserve(tree.Depth() + 2);
  Recurse(tree, x, 0, std::move(path), 1.0, 1.0, -1, result.contributions);
  return result;
}

double ConditionalExpectation(const Tree& tree, std::span<const double> x,
                              const std::vector<bool>& coalition) {
  CheckCovers(tree);
  return ConditionalExpectationAt(tree, x, coalition, 0);
}

std::vector<double> BruteForceShapley(const Tree& tree,
                                      std::span<const double> x,
                                      size_t num_features) {
  CheckCovers(tree);
  std::set<size_t> used_set;
  for (const auto& node : tree.nodes) {
    if (!node.is_leaf()) used_set.insert(static_cast<size_t>(node.feature));
  }
  const std::vector<size_t> used(used_set.begin(), used_set.end());
  const size_t d = used.size();
  if (d > kMaxBruteForceFeatures) {
    throw std::invalid_argument(
        "tree uses " + std::to_string(d) + " features; brute force supports " +
        std::to_string(kMaxBruteForceFeatures));
  }
  std::vector<double> phi(num_features, 0.0);
  if (d == 0) return phi;

  const size_t subsets = size_t{1} << d;
  std::vector<double> value(subsets);
  std::vector<bool> coalition(num_features, false);
  for (size_t mask = 0; mask < subsets; ++mask) {
    for (size_t k = 0; k < d; ++k) coalition[used[k]] = (mask >> k) & 1;
    value[mask] = ConditionalExpectationAt(tree, x, coalition, 0);
  }
  // weight[s] = s! (d - s - 1)! / d!
  std::vector<double> weight(d);
  for (size_t s = 0; s < d; ++s) {
    double w = 1.0 / static_cast<double>(d);
    // 1/d * 1/C(d-1, s)
    for (size_t k = 1; k <= s; ++k) {
      w *= static_cast<double>(k) / static_cast<double>(d - 1 - s + k);
    }
    weight[s] = w;
  }
  for (size_t k = 0; k < d; ++k) {
    const size_t bit = size_t{1} << k;
    double total = 0.0;
    for (size_t mask = 0; mask < subsets; ++mask) {
      if (mask & bit) continue;
      const auto size = static_cast<size_t>(std::popcount(mask));
      total += weight[size] * (value[mask | bit] - value[mask]);
    }
    phi[used[k]] = total;
  }
  return phi;
}

ShapMatrix ExplainEncoded(const Ensemble& model, const FeatureMatrix& x,
                          size_t threads) {
  ShapMatrix shap;
  shap.num_rows = x.num_rows;
  shap.num_features = model.features().size();
  shap.feature_names = model.FeatureNames();
  shap.values.assign(shap.num_rows * shap.num_features, 0.0);
  if (x.num_features != shap.num_features) {
    throw std::invalid_argument("encoded rows do not match the model");
  }
  double expected = 0.0;
  for (const auto& tree : model.trees()) {
    CheckCovers(tree);
    expected += tree.ExpectedValue();
  }
  shap.base_value = model.base_score() + model.learning_rate() * expected;

  ParallelFor(x.num_rows, threads, [&](size_t i) {
    std::vector<double> phi(shap.num_features, 0.0);
    const auto row = x.row(i);
    for (const auto& tree : model.trees()) {
      if (tree.nodes.front().is_leaf()) continue;
      Path path;
      Recurse(tree, row, 0, std::move(path), 1.0, 1.0, -1, phi);
    }
    for (size_t j = 0; j < shap.num_features; ++j) {
      shap.values[i * shap.num_features + j] = model.learning_rate() * phi[j];
    }
  });
  return shap;
}

ShapMatrix ExplainEnsemble(const Ensemble& model, const Table& rows,
                           size_t threads) {
  return ExplainEncoded(model, model.Encode(rows), threads);
}

ImportanceRanking GlobalImportance(const ShapMatrix& shap) {
  if (shap.num_rows == 0) {
    throw std::invalid_argument("cannot rank an empty SHAP matrix");
  }
  ImportanceRanking ranking;
  for (size_t j = 0; j < shap.num_features; ++j) {
    double total = 0.0;
    for (size_t i = 0; i < shap.num_rows; ++i) total += std::abs(shap.at(i, j));
    ranking.push_back(
        {shap.feature_names[j], total / static_cast<double>(shap.num_rows)});
  }
  std::sort(ranking.begin(), ranking.end(),
            [](const ImportanceEntry& a, const ImportanceEntry& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.feature < b.feature;
            });
  return ranking;
}

std::string ShapMatrixCsv(const ShapMatrix& shap,
                          std::span<const std::string> row_ids) {
  if (row_ids.size() != shap.num_rows) {
    throw std::invalid_argument("row id count differs from SHAP rows");
  }
  std::string out = "row_id";
  for (const auto& name : shap.feature_names) out += "," + name;
  out += ",base_value\n";
  const std::string base = FormatDouble(shap.base_value);
  for (size_t i = 0; i < shap.num_rows; ++i) {
    out += row_ids[i];
    for (size_t j = 0; j < shap.num_features; ++j) {
      out += "," + FormatDouble(shap.at(i, j));
    }
    out += "," + base + "\n";
  }
  return out;
}

std::string RankingCsv(const ImportanceRanking& ranking) {
  std::string out = "rank,feature,score\n";
  for (size_t r = 0; r < ranking.size(); ++r) {
    out += std::to_string(r + 1) + "," + ranking[r].feature + "," +
           FormatDouble(ranking[r].score) + "\n";
  }
  return out;
}

}  // namespace amescause
