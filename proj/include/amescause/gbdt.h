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

// Histogram gradient boosting for squared-error regression.
//
// Two growth strategies are supported:
//
//   * LeafWise: best-first growth. The frontier leaf with the largest split
//     gain is split next, whatever its depth, until `num_leaves` is reached.
//     Categorical features are split one level against the rest using
//     per-level gradient statistics. No L2 term on leaves.
//   * LevelWise: breadth-first growth. Every node of a level is expanded
//     before the next level. Categorical features are replaced by an ordered
//     target statistic computed along one random permutation of the training
//     rows, and leaves are regularized with `l2_leaf_reg`.
//
// Prediction convention: f(x) = base_score + learning_rate * sum_t leaf_t(x).
// Leaf values are stored unshrunk.

#ifndef AMESCAUSE_GBDT_H_
#define AMESCAUSE_GBDT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "amescause/dataset.h"

namespace amescause {

struct LeafWise {
  size_t num_leaves = 31;
  size_t min_child_samples = 20;
  size_t max_depth = 10;

  bool operator==(const LeafWise&) const = default;
};

struct LevelWise {
  size_t depth = 6;
  double l2_leaf_reg = 3.0;
  size_t border_count = 254;

  bool operator==(const LevelWise&) const = default;
};

using GrowthStrategy = std::variant<LeafWise, LevelWise>;

enum class ModelFamily { kLeafWise, kLevelWise };

std::string_view FamilyName(ModelFamily family);
ModelFamily ParseFamily(std::string_view name);
ModelFamily FamilyOf(const GrowthStrategy& strategy);
// Throws std::invalid_argument when the strategy violates its invariants.
void ValidateStrategy(const GrowthStrategy& strategy);

struct TreeNode {
  // Index of the split feature, or -1 for a leaf.
  int32_t feature = -1;
  bool categorical = false;
  // Numeric split: values <= threshold go left. NaN goes right.
  double threshold = 0.0;
  // Categorical split: sorted level codes that go left.
  std::vector<int32_t> left_levels;
  int32_t left = -1;
  int32_t right = -1;
  // Leaf output (unshrunk). Internal nodes keep the value they would have had
  // as a leaf.
  double value = 0.0;
  // Number of training samples that reached the node.
  double cover = 0.0;
  double gain = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool GoesLeft(double x) const;

  bool operator==(const TreeNode&) const = default;
};

// Nodes are stored in pre-order; nodes[0] is the root.
struct Tree {
  std::vector<TreeNode> nodes;

  size_t LeafIndex(std::span<const double> row) const;
  double Predict(std::span<const double> row) const {
    return nodes[LeafIndex(row)].value;
  }
  // Cover-weighted mean of the leaf values.
  double ExpectedValue() const;
  size_t NumLeaves() const;
  size_t Depth() const;
  // Throws std::invalid_argument on dangling children, non pre-order layout
  // or inconsistent covers.
  void Validate() const;

  bool operator==(const Tree&) const = default;
};

// How a table column is turned into the model's numeric input.
enum class FeatureEncoding {
  kNumeric,
  // Value is the level code; trees split with level sets.
  kCategoricalCodes,
  // Value is the smoothed per-level target mean; trees split numerically.
  kOrderedTarget,
};

struct FeatureSpec {
  std::string name;
  FeatureEncoding encoding = FeatureEncoding::kNumeric;
  std::vector<std::string> levels;
  // kOrderedTarget: per-level target sum and count over the full training
  // set, used at prediction time.
  std::vector<double> level_target_sums;
  std::vector<double> level_counts;
  double prior = 0.0;
  double prior_weight = 1.0;

  double EncodedLevel(int32_t code) const;
  bool operator==(const FeatureSpec&) const = default;
};

// Row-major matrix of model inputs.
struct FeatureMatrix {
  size_t num_rows = 0;
  size_t num_features = 0;
  std::vector<double> data;

  std::span<const double> row(size_t i) const {
    return {data.data() + i * num_features, num_features};
  }
  double at(size_t i, size_t f) const { return data[i * num_features + f]; }
};

class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(std::vector<FeatureSpec> features, double base_score,
           double learning_rate, GrowthStrategy strategy,
           std::vector<Tree> trees);

  const std::vector<FeatureSpec>& features() const { return features_; }
  const std::vector<Tree>& trees() const { return trees_; }
  double base_score() const { return base_score_; }
  double learning_rate() const { return learning_rate_; }
  const GrowthStrategy& strategy() const { return strategy_; }
  std::vector<std::string> FeatureNames() const;

  // Converts table rows to model inputs. Columns are matched by name; unseen
  // categorical levels map to NA. Throws DataError on a missing column.
  FeatureMatrix Encode(const Table& rows) const;
  double PredictRow(std::span<const double> encoded) const;
  std::vector<double> Predict(const FeatureMatrix& encoded) const;
  std::vector<double> Predict(const Table& rows) const;

  bool operator==(const Ensemble&) const = default;

 private:
  std::vector<FeatureSpec> features_;
  double base_score_ = 0.0;
  double learning_rate_ = 1.0;
  GrowthStrategy strategy_;
  std::vector<Tree> trees_;
};

// ---------------------------------------------------------------------------
// Binning and split search.

struct HistogramBin {
  double upper_edge = 0.0;
  double grad_sum = 0.0;
  double hess_sum = 0.0;
  size_t count = 0;
};

// Bin boundaries of one model input.
struct FeatureBins {
  bool categorical = false;
  // Numeric: strictly increasing upper edges, the last one is +inf. A value v
  // falls in the first bin whose edge is >= v; NaN falls in the last bin.
  // Categorical: one bin per level code, edges unused.
  std::vector<double> upper_edges;
  size_t num_levels = 0;

  size_t num_bins() const {
    return categorical ? num_levels : upper_edges.size();
  }
  uint16_t BinOf(double value) const;
};

// Quantile bins with at most `max_bins` bins. Every distinct value gets its
// own bin when there are at most `max_bins` of them.
FeatureBins BinValues(std::span<const double> values, size_t max_bins);

// Bins every numeric feature column of `table` (categorical columns get one
// bin per level). Result is in FeatureNames() order.
std::vector<FeatureBins> BinFeatures(const Table& table, size_t border_count);

struct BinnedMatrix {
  size_t num_rows = 0;
  std::vector<FeatureBins> bins;
  // Column-major bin indices, codes[f][row].
  std::vector<std::vector<uint16_t>> codes;
};

BinnedMatrix BinMatrix(const FeatureMatrix& x,
                       std::span<const FeatureEncoding> encodings,
                       std::span<const size_t> num_levels, size_t max_bins);

struct SplitCandidate {
  size_t feature = 0;
  // Numeric: last bin that goes left. Categorical: the level that goes left.
  size_t bin = 0;
  bool categorical = false;
  double gain = 0.0;
  double left_grad = 0.0;
  double left_hess = 0.0;
  size_t left_count = 0;
  double right_grad = 0.0;
  double right_hess = 0.0;
  size_t right_count = 0;
};

// G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2).
double SplitGain(double left_grad, double left_hess, double right_grad,
                 double right_hess, double l2);

// Best prefix split of ordered bins, or nullopt when no split has positive
// gain with both children holding at least `min_child_samples` samples.
// `feature` is copied into the result.
std::optional<SplitCandidate> FindBestSplit(std::span<const HistogramBin> bins,
                                            double l2,
                                            size_t min_child_samples,
                                            size_t feature = 0);
// Best one-level-versus-rest split of per-level statistics.
std::optional<SplitCandidate> FindBestCategoricalSplit(
    std::span<const HistogramBin> levels, double l2, size_t min_child_samples,
    size_t feature = 0);

// Grows one tree on `rows` (each may appear once). `weights` is either empty
// or parallel to `rows`.
Tree GrowTree(const BinnedMatrix& data, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const size_t> rows,
              std::span<const double> weights, const GrowthStrategy& strategy);

// Ordered target statistic. Row permutation[k] is encoded with the targets of
// same-level rows at positions < k:
//   (sum + prior_weight * prior) / (count + prior_weight).
std::vector<double> OrderedTargetEncode(std::span<const int32_t> codes,
                                        std::span<const double> targets,
                                        std::span<const size_t> permutation,
                                        double prior_weight, double prior);

struct GossParams {
  double top_rate = 0.2;
  double other_rate = 0.1;

  bool operator==(const GossParams&) const = default;
};

struct GossSample {
  std::vector<size_t> rows;
  std::vector<double> weights;
};

// Gradient-based one-side sampling: keeps the ceil(a*n) largest |g| at weight
// 1 and ceil(b*n) uniform draws from the rest at weight (1-a)/b.
GossSample GossSampleRows(std::span<const double> gradients,
                          const GossParams& params, uint64_t seed);

// ---------------------------------------------------------------------------
// Training.

inline constexpr size_t kDefaultMaxBin = 255;

struct TrainParams {
  GrowthStrategy strategy = LevelWise{};
  double learning_rate = 0.1;
  size_t n_trees = 500;
  std::optional<GossParams> goss;
  uint64_t seed = 42;
  // Ordered target statistic smoothing.
  double prior_weight = 1.0;
  // Numeric binning resolution for the leaf-wise strategy. Level-wise uses
  // border_count.
  size_t max_bin = kDefaultMaxBin;

  bool operator==(const TrainParams&) const = default;
};

struct FitResult {
  Ensemble model;
  // Training RMSE after each boosting round.
  std::vector<double> train_rmse;
};

FitResult Fit(const Table& train, const TrainParams& params);

double R2Score(std::span<const double> predictions,
               std::span<const double> actual);

// ---------------------------------------------------------------------------
// Model selection.

struct GridSearchSpec {
  std::vector<double> learning_rates = {0.1, 0.05, 0.01};
  std::vector<size_t> max_depths = {3, 5, 10};
  // Leaf-wise only; num_leaves is 2^max_depth.
  std::vector<size_t> min_child_samples = {20, 30, 40};
  // Level-wise only.
  std::vector<double> l2_leaf_regs = {1.0, 5.0, 10.0};
  std::vector<size_t> border_counts = {32, 128, 255};
  size_t folds = 5;
  // Shared by every configuration.
  TrainParams base;
};

// Cartesian product in grid order: learning rate, then depth, then the
// family-specific parameters.
std::vector<TrainParams> ExpandGrid(const GridSearchSpec& spec,
                                    ModelFamily family);

// Held-out row indices of each fold after a seeded shuffle.
std::vector<std::vector<size_t>> KFoldIndices(size_t num_rows, size_t folds,
                                              uint64_t seed);

struct CvRow {
  TrainParams params;
  std::vector<double> fold_r2;
  double mean_r2 = 0.0;
};

struct GridSearchResult {
  TrainParams best;
  double best_score = 0.0;
  std::vector<CvRow> table;
};

// Exhaustive k-fold search maximizing mean R^2. Ties go to the earlier
// configuration. `threads` = 0 uses the hardware concurrency.
GridSearchResult GridSearch(const Table& train, const GridSearchSpec& spec,
                            ModelFamily family, size_t threads = 0);

std::string DescribeParams(const TrainParams& params);

// ---------------------------------------------------------------------------
// Serialization. JSON with fixed field names; doubles round-trip exactly.

std::string SerializeEnsemble(const Ensemble& model);
Ensemble DeserializeEnsemble(std::string_view text);
void SaveEnsemble(const Ensemble& model, const std::filesystem::path& path);
Ensemble LoadEnsemble(const std::filesystem::path& path);

}  // namespace amescause

#endif  // AMESCAUSE_GBDT_H_
