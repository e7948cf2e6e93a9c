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

// Path-dependent Tree SHAP.
//
// Missing features are marginalized with the training covers stored in the
// trees: at a split on a feature outside the coalition both branches are
// followed and weighted by their share of the node's cover. No background
// dataset is needed. Attributions are in the model's raw output units.

#ifndef AMESCAUSE_SHAP_H_
#define AMESCAUSE_SHAP_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amescause/dataset.h"
#include "amescause/gbdt.h"

namespace amescause {

// Row-major attributions. For every row i:
//   base_value + sum_j at(i, j) == model prediction of row i.
struct ShapMatrix {
  size_t num_rows = 0;
  size_t num_features = 0;
  std::vector<double> values;
  double base_value = 0.0;
  std::vector<std::string> feature_names;

  double at(size_t i, size_t j) const { return values[i * num_features + j]; }
  std::span<const double> row(size_t i) const {
    return {values.data() + i * num_features, num_features};
  }
};

struct TreeShapResult {
  std::vector<double> contributions;
  double expected_value = 0.0;
};

// Exact SHAP values of one tree for the encoded row `x`. Throws
// std::invalid_argument on a node with non-positive cover.
TreeShapResult TreeShapSingle(const Tree& tree, std::span<const double> x,
                              size_t num_features);

// Cover-weighted value of the tree when only the features in `coalition`
// (indexed by feature) are known.
double ConditionalExpectation(const Tree& tree, std::span<const double> x,
                              const std::vector<bool>& coalition);

inline constexpr size_t kMaxBruteForceFeatures = 12;

// Shapley values by enumerating every subset of the features the tree uses.
// Throws std::invalid_argument when the tree uses more than
// kMaxBruteForceFeatures distinct features.
std::vector<double> BruteForceShapley(const Tree& tree,
                                      std::span<const double> x,
                                      size_t num_features);

// Sums learning_rate-scaled tree attributions. `threads` = 0 uses the
// hardware concurrency.
ShapMatrix ExplainEncoded(const Ensemble& model, const FeatureMatrix& x,
                          size_t threads = 0);
ShapMatrix ExplainEnsemble(const Ensemble& model, const Table& rows,
                           size_t threads = 0);

struct ImportanceEntry {
  std::string feature;
  double score = 0.0;

  bool operator==(const ImportanceEntry&) const = default;
};

// Descending mean |SHAP|; equal scores are ordered by feature name.
using ImportanceRanking = std::vector<ImportanceEntry>;

ImportanceRanking GlobalImportance(const ShapMatrix& shap);

// "row_id,<features...>,base_value" with one line per row.
std::string ShapMatrixCsv(const ShapMatrix& shap,
                          std::span<const std::string> row_ids);
// "rank,feature,score".
std::string RankingCsv(const ImportanceRanking& ranking);

}  // namespace amescause

#endif  // AMESCAUSE_SHAP_H_
