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

// Per-feature causal effects with cross-fitted double machine learning.
//
// The model is partially linear: Y = theta * T + g(X) + e. Both nuisances
// E[Y|X] and E[T|X] are fitted with the gbdt module on the complement of each
// fold and evaluated on the fold. theta is the no-intercept slope of the
// outcome residuals on the treatment residuals.
//
// Heterogeneity and policy trees are fitted on the per-row scores
//   psi_i = T~_i * Y~_i / mean(T~^2),
// whose mean is theta.

#ifndef AMESCAUSE_CAUSAL_H_
#define AMESCAUSE_CAUSAL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "amescause/dataset.h"
#include "amescause/gbdt.h"

namespace amescause {

enum class TreatmentKind { kBinary, kContinuous, kCategorical };

struct TreatmentSpec {
  std::string feature;
  TreatmentKind kind = TreatmentKind::kContinuous;
  // Reference level of binary and categorical treatments.
  std::string baseline;
};

// Numeric columns are continuous. Categorical columns whose non-NA levels are
// exactly {"0", "1"} are binary with baseline "0". Other categorical columns
// use the lexicographically first non-NA level present as the baseline.
TreatmentSpec InferTreatment(const Table& data, std::string_view feature);

struct CausalEffect {
  std::string feature;
  // "<level> v <baseline>" or "num".
  std::string contrast;
  double ate = 0.0;
  double stderr = 0.0;
  double p_value = 1.0;
  size_t num_rows = 0;

  bool operator==(const CausalEffect&) const = default;
};

// Two-sided normal p-value 2 * (1 - Phi(|z|)).
double NormalPValue(double z);

struct FinalStage {
  double ate = 0.0;
  double stderr = 0.0;
  double p_value = 1.0;
};

// theta = sum(t*y) / sum(t^2) with the HC0 sandwich standard error. Throws
// DataError when the treatment residuals have no variance.
FinalStage ResidualRegression(std::span<const double> t_residual,
                              std::span<const double> y_residual);

// Level-wise, depth 3, 200 trees, learning rate 0.1.
TrainParams DefaultNuisanceParams();

struct DmlOptions {
  size_t folds = 5;
  uint64_t seed = 42;
  TrainParams nuisance = DefaultNuisanceParams();
  // A categorical contrast needs this many rows at both levels.
  size_t min_group_rows = 30;
  // Overlap guard: sum(T~^2) must exceed this fraction of the treatment's
  // total sum of squares, otherwise the confounders nearly determine T.
  double min_residual_variance_ratio = 0.01;
};

// One estimated contrast with everything needed to audit the cross-fitting.
struct ContrastFit {
  CausalEffect effect;
  // Level compared with the baseline; empty for continuous treatments.
  std::string level;
  // Source rows used, ascending indices into the data table.
  std::vector<size_t> rows;
  // Parallel to rows.
  std::vector<double> treatment;
  std::vector<double> outcome;
  std::vector<double> t_residual;
  std::vector<double> y_residual;
  std::vector<size_t> fold_of_row;
  // Positions into `rows` held out by each fold.
  std::vector<std::vector<size_t>> folds;
};

// Cross-fitted DML for every contrast of `treatment`. The outcome must be a
// numeric column; the confounders are all remaining feature columns. Throws
// DataError when the treatment is constant or a contrast is too rare.
std::vector<ContrastFit> FitContrasts(const Table& data,
                                      const TreatmentSpec& treatment,
                                      std::string_view outcome,
                                      const DmlOptions& options);

std::vector<CausalEffect> DmlEffect(const Table& data,
                                    const TreatmentSpec& treatment,
                                    std::string_view outcome,
                                    const DmlOptions& options);

struct SkippedTreatment {
  std::string feature;
  std::string reason;

  bool operator==(const SkippedTreatment&) const = default;
};

struct EffectsResult {
  std::vector<CausalEffect> effects;
  std::vector<SkippedTreatment> skipped;
};

// Estimates each feature independently. Infeasible treatments and rare
// contrasts are reported in `skipped`. `threads` = 0 uses the hardware
// concurrency.
EffectsResult EstimateEffects(const Table& data,
                              std::span<const std::string> features,
                              std::string_view outcome,
                              const DmlOptions& options, size_t threads = 0);

// Ascending p-value, then descending |ate|, then feature and contrast name.
std::vector<CausalEffect> SignificanceTable(std::vector<CausalEffect> effects);

// Features ordered by their best contrast in the significance table, keeping
// only those with p-value < alpha.
std::vector<std::string> CausalRankList(
    std::span<const CausalEffect> significance, double alpha);

// "feature,contrast,ate,stderr,p_value".
std::string EffectsCsv(std::span<const CausalEffect> effects);

// Throws DataError when the treatment is not binary or the residual variance
// is negligible.
std::vector<double> PseudoOutcomes(const ContrastFit& fit);

// Feature columns prepared for effect-tree splits.
struct Covariates {
  size_t num_rows = 0;
  std::vector<std::string> names;
  std::vector<bool> categorical;
  // Level names of categorical columns.
  std::vector<std::vector<std::string>> levels;
  // Numeric values or level codes, columns[f][row].
  std::vector<std::vector<double>> columns;
};

Covariates MakeCovariates(const Table& data);
Covariates SelectCovariateRows(const Covariates& x,
                               std::span<const size_t> rows);

struct EffectTreeNode {
  // -1 for leaves.
  int32_t feature = -1;
  bool categorical = false;
  // Numeric: x <= threshold goes left. Categorical: level == `level` goes
  // left.
  double threshold = 0.0;
  int32_t level = -1;
  int32_t left = -1;
  int32_t right = -1;
  double mean = 0.0;
  size_t count = 0;
  double gain = 0.0;
  // Policy trees only.
  bool treat = false;
  double net_effect = 0.0;

  bool is_leaf() const { return feature < 0; }
};

// Pre-order node list of a CATE or policy tree.
struct EffectTree {
  bool policy = false;
  double cost = 0.0;
  std::vector<std::string> feature_names;
  std::vector<std::vector<std::string>> levels;
  std::vector<EffectTreeNode> nodes;

  size_t LeafOf(const Covariates& x, size_t row) const;
  size_t Depth() const;
  // Indented human-readable rendering, one node per line.
  std::string ToText() const;
};

using CateTree = EffectTree;
using PolicyTree = EffectTree;

struct EffectTreeOptions {
  size_t max_depth = 2;
  size_t min_leaf = 20;
};

// Variance-reduction regression tree on psi.
CateTree FitCateTree(std::span<const double> psi, const Covariates& x,
                     const EffectTreeOptions& options);

// Greedy tree maximizing the summed net benefit (psi - cost) of treated
// leaves. A split is kept only when it improves the node's own best constant
// action.
PolicyTree FitPolicyTree(std::span<const double> psi, const Covariates& x,
                         double cost, const EffectTreeOptions& options);

// Sum over treated rows of (psi_i - cost), accumulated in row order.
double PolicyNetBenefit(const PolicyTree& tree, std::span<const double> psi,
                        const Covariates& x, double cost);

struct WhatIfResult {
  double baseline_mean = 0.0;
  double counterfactual_mean = 0.0;
  size_t n_affected = 0;
};

// Sets `feature` to `value` on every row where it differs and compares mean
// predictions before and after.
WhatIfResult WhatIf(const Ensemble& model, const Table& rows,
                    std::string_view feature, std::string_view value);

}  // namespace amescause

#endif  // AMESCAUSE_CAUSAL_H_
