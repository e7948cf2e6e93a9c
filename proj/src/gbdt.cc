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

#include "amescause/gbdt.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "amescause/errors.h"
#include "amescause/parallel.h"
#include "amescause/random.h"

namespace amescause {

std::string_view FamilyName(ModelFamily family) {
  return family == ModelFamily::kLeafWise ? "leafwise" : "levelwise";
}

ModelFamily ParseFamily(std::string_view name) {
  if (name == "leafwise") return ModelFamily::kLeafWise;
  if (name == "levelwise") return ModelFamily::kLevelWise;
  throw ConfigError("unknown model family '" + std::string(name) +
                    "' (expected leafwise or levelwise)");
}

ModelFamily FamilyOf(const GrowthStrategy& strategy) {
  return std::holds_alternative<LeafWise>(strategy) ? ModelFamily::kLeafWise
                                                    : ModelFamily::kLevelWise;
}

void ValidateStrategy(const GrowthStrategy& strategy) {
  if (const auto* leaf_wise = std::get_if<LeafWise>(&strategy)) {
    if (leaf_wise->num_leaves < 2) {
      throw std::invalid_argument("num_leaves must be >= 2");
    }
    if (leaf_wise->min_child_samples < 1) {
      throw std::invalid_argument("min_child_samples must be >= 1");
    }
    if (leaf_wise->max_depth < 1) {
      throw std::invalid_argument("max_depth must be >= 1");
    }
    if (leaf_wise->max_depth < 63 &&
        leaf_wise->num_leaves > (size_t{1} << leaf_wise->max_depth)) {
      throw std::invalid_argument("num_leaves must be <= 2^max_depth");
    }
    return;
  }
  const auto& level_wise = std::get<LevelWise>(strategy);
  if (level_wise.depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (level_wise.border_count < 2 || level_wise.border_count > 65535) {
    throw std::invalid_argument("border_count must be in [2, 65535]");
  }
  if (!(level_wise.l2_leaf_reg >= 0.0)) {
    throw std::invalid_argument("l2_leaf_reg must be >= 0");
  }
}

double FeatureSpec::EncodedLevel(int32_t code) const {
  const auto index = static_cast<size_t>(code);
  double sum = 0.0;
  double count = 0.0;
  if (index < level_target_sums.size()) {
    sum = level_target_sums[index];
    count = level_counts[index];
  }
  return (sum + prior_weight * prior) / (count + prior_weight);
}

Ensemble::Ensemble(std::vector<FeatureSpec> features, double base_score,
                   double learning_rate, GrowthStrategy strategy,
                   std::vector<Tree> trees)
    : features_(std::move(features)),
      base_score_(base_score),
      learning_rate_(learning_rate),
      strategy_(strategy),
      trees_(std::move(trees)) {
  for (const auto& tree : trees_) {
    tree.Validate();
    for (const auto& node : tree.nodes) {
      if (!node.is_leaf() &&
          static_cast<size_t>(node.feature) >= features_.size()) {
        throw std::invalid_argument("tree references unknown feature");
      }
    }
  }
}

std::vector<std::string> Ensemble::FeatureNames() const {
  std::vector<std::string> names;
  names.reserve(features_.size());
  for (const auto& spec : features_) names.push_back(spec.name);
  return names;
}

FeatureMatrix Ensemble::Encode(const Table& rows) const {
  FeatureMatrix x;
  x.num_rows = rows.num_rows();
  x.num_features = features_.size();
  x.data.resize(x.num_rows * x.num_features);
  for (size_t f = 0; f < features_.size(); ++f) {
    const FeatureSpec& spec = features_[f];
    if (!rows.Has(spec.name)) {
      throw DataError("missing feature column '" + spec.name + "'");
    }
    const Column& column = rows.column(spec.name);
    if (spec.encoding == FeatureEncoding::kNumeric) {
      if (!column.is_numeric()) {
        throw DataError("feature '" + spec.name + "' must be numeric");
      }
      for (size_t i = 0; i < x.num_rows; ++i) {
        x.data[i * x.num_features + f] = column.values[i];
      }
      continue;
    }
    if (!column.is_categorical()) {
      throw DataError("feature '" + spec.name + "' must be categorical");
    }
    // Translate the table dictionary into the model's.
    std::unordered_map<std::string, int32_t> model_codes;
    for (size_t l = 0; l < spec.levels.size(); ++l) {
      model_codes.emplace(spec.levels[l], static_cast<int32_t>(l));
    }
    std::vector<double> translated(column.levels.size());
    for (size_t l = 0; l < column.levels.size(); ++l) {
      const auto it = model_codes.find(column.levels[l]);
      const int32_t code = it == model_codes.end() ? kNaCode : it->second;
      translated[l] = spec.encoding == FeatureEncoding::kOrderedTarget
                          ? spec.EncodedLevel(code)
                          : static_cast<double>(code);
    }
    for (size_t i = 0; i < x.num_rows; ++i) {
      x.data[i * x.num_features + f] =
          translated[static_cast<size_t>(column.codes[i])];
    }
  }
  return x;
}

double Ensemble::PredictRow(std::span<const double> encoded) const {
  double sum = 0.0;
  for (const auto& tree : trees_) sum += tree.Predict(encoded);
  return base_score_ + learning_rate_ * sum;
}

std::vector<double> Ensemble::Predict(const FeatureMatrix& encoded) const {
  std::vector<double> predictions(encoded.num_rows);
  for (size_t i = 0; i < encoded.num_rows; ++i) {
    predictions[i] = PredictRow(encoded.row(i));
  }
  return predictions;
}

std::vector<double> Ensemble::Predict(const Table& rows) const {
  return Predict(Encode(rows));
}

std::vector<double> OrderedTargetEncode(std::span<const int32_t> codes,
                                        std::span<const double> targets,
                                        std::span<const size_t> permutation,
                                        double prior_weight, double prior) {
  const size_t n = codes.size();
  if (targets.size() != n || permutation.size() != n) {
    throw std::invalid_argument("codes, targets and permutation must align");
  }
  if (!(prior_weight >= 0.0)) {
    throw std::invalid_argument("prior_weight must be >= 0");
  }
  std::vector<bool> seen(n, false);
  for (size_t row : permutation) {
    if (row >= n || seen[row]) {
      throw std::invalid_argument("permutation is not a bijection");
    }
    seen[row] = true;
  }
  std::unordered_map<int32_t, std::pair<double, double>> history;
  std::vector<double> encoded(n);
  for (size_t row : permutation) {
    auto& [sum, count] = history[codes[row]];
    encoded[row] = count + prior_weight > 0.0
                       ? (sum + prior_weight * prior) / (count + prior_weight)
                       : prior;
    sum += targets[row];
    count += 1.0;
  }
  return encoded;
}

GossSample GossSampleRows(std::span<const double> gradients,
                          const GossParams& params, uint64_t seed) {
  const size_t n = gradients.size();
  if (n == 0) throw std::invalid_argument("GOSS needs a non-empty gradient");
  const double a = params.top_rate;
  const double b = params.other_rate;
  if (!(a >= 0.0 && b >= 0.0 && a <= 1.0 && b <= 1.0)) {
    throw std::invalid_argument("GOSS rates must lie in [0, 1]");
  }
  if (a + b > 1.0 + 1e-12) {
    throw std::invalid_argument("GOSS requires top_rate + other_rate <= 1");
  }
  auto ceil_count = [n](double rate) {
    return std::min(
        n, static_cast<size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
  };
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) {
    return std::abs(gradients[i]) > std::abs(gradients[j]);
  });
  const size_t top = ceil_count(a);
  std::vector<std::pair<size_t, double>> picked;
  for (size_t k = 0; k < top; ++k) picked.emplace_back(order[k], 1.0);

  std::vector<size_t> rest(order.begin() + static_cast<ptrdiff_t>(top),
                           order.end());
  const size_t draws = b > 0.0 ? std::min(rest.size(), ceil_count(b)) : 0;
  if (draws > 0) {
    std::sort(rest.begin(), rest.end());
    Rng rng(seed);
    const double amplification = (1.0 - a) / b;
    for (size_t k = 0; k < draws; ++k) {
      const size_t j = k + static_cast<size_t>(rng.Below(rest.size() - k));
      std::swap(rest[k], rest[j]);
      picked.emplace_back(rest[k], amplification);
    }
  }
  std::sort(picked.begin(), picked.end());
  GossSample sample;
  for (const auto& [row, weight] : picked) {
    sample.rows.push_back(row);
    sample.weights.push_back(weight);
  }
  return sample;
}

FitResult Fit(const Table& train, const TrainParams& params) {
  ValidateStrategy(params.strategy);
  if (params.n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) {
    throw std::invalid_argument("learning_rate must be in (0, 1]");
  }
  const Column& target = train.target();
  if (!target.is_numeric()) throw DataError("target must be numeric");
  const std::vector<double>& y = target.values;
  const size_t n = train.num_rows();
  if (n == 0) throw DataError("cannot fit on an empty table");
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("target contains non-finite values");
  }
  const double base_score =
      std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  const ModelFamily family = FamilyOf(params.strategy);

  const std::vector<std::string> names = train.FeatureNames();
  std::vector<FeatureSpec> specs;
  std::vector<FeatureEncoding> encodings;
  std::vector<size_t> num_levels;
  FeatureMatrix x;
  x.num_rows = n;
  x.num_features = names.size();
  x.data.resize(n * names.size());

  std::vector<size_t> permutation;
  if (family == ModelFamily::kLevelWise) {
    permutation = Rng(params.seed).Permutation(n);
  }
  for (size_t f = 0; f < names.size(); ++f) {
    const Column& column = train.column(names[f]);
    FeatureSpec spec;
    spec.name = names[f];
    std::vector<double> values(n);
    if (column.is_numeric()) {
      spec.encoding = FeatureEncoding::kNumeric;
      values = column.values;
    } else if (family == ModelFamily::kLeafWise) {
      spec.encoding = FeatureEncoding::kCategoricalCodes;
      spec.levels = column.levels;
      for (size_t i = 0; i < n; ++i) values[i] = column.codes[i];
    } else {
      spec.encoding = FeatureEncoding::kOrderedTarget;
      spec.levels = column.levels;
      spec.prior = base_score;
      spec.prior_weight = params.prior_weight;
      spec.level_target_sums.assign(column.levels.size(), 0.0);
      spec.level_counts.assign(column.levels.size(), 0.0);
      for (size_t i = 0; i < n; ++i) {
        const auto code = static_cast<size_t>(column.codes[i]);
        spec.level_target_sums[code] += y[i];
        spec.level_counts[code] += 1.0;
      }
      values = OrderedTargetEncode(column.codes, y, permutation,
                                   params.prior_weight, base_score);
    }
    for (size_t i = 0; i < n; ++i) x.data[i * x.num_features + f] = values[i];
    encodings.push_back(spec.encoding);
    num_levels.push_back(spec.levels.size());
    specs.push_back(std::move(spec));
  }

  const size_t max_bins =
      family == ModelFamily::kLeafWise
          ? params.max_bin
          : std::get<LevelWise>(params.strategy).border_count;
  const BinnedMatrix binned = BinMatrix(x, encodings, num_levels, max_bins);

  FitResult result;
  std::vector<double> predictions(n, base_score);
  std::vector<double> gradients(n);
  const std::vector<double> hessians(n, 1.0);
  std::vector<size_t> all_rows(n);
  std::iota(all_rows.begin(), all_rows.end(), size_t{0});
  std::vector<Tree> trees;
  trees.reserve(params.n_trees);
  for (size_t round = 0; round < params.n_trees; ++round) {
    for (size_t i = 0; i < n; ++i) gradients[i] = predictions[i] - y[i];
    Tree tree;
    if (params.goss) {
      const GossSample sample = GossSampleRows(
          gradients, *params.goss,
          params.seed ^ ((round + 1) * 0x9E3779B97F4A7C15ULL));
      tree = GrowTree(binned, gradients, hessians, sample.rows, sample.weights,
                      params.strategy);
    } else {
      tree = GrowTree(binned, gradients, hessians, all_rows, {},
                      params.strategy);
    }
    double squared_error = 0.0;
    for (size_t i = 0; i < n; ++i) {
      predictions[i] += params.learning_rate * tree.Predict(x.row(i));
      const double residual = predictions[i] - y[i];
      squared_error += residual * residual;
    }
    result.train_rmse.push_back(
        std::sqrt(squared_error / static_cast<double>(n)));
    trees.push_back(std::move(tree));
  }
  result.model = Ensemble(std::move(specs), base_score, params.learning_rate,
                          params.strategy, std::move(trees));
  return result;
}

double R2Score(std::span<const double> predictions,
               std::span<const double> actual) {
  if (predictions.size() != actual.size()) {
    throw std::invalid_argument("prediction and actual lengths differ");
  }
  if (actual.size() < 2) throw std::invalid_argument("R^2 needs >= 2 values");
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) /
                      static_cast<double>(actual.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - predictions[i]) * (actual[i] - predictions[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0.0) throw DataError("R^2 is undefined for a constant target");
  return 1.0 - ss_res / ss_tot;
}

std::vector<TrainParams> ExpandGrid(const GridSearchSpec& spec,
                                    ModelFamily family) {
  if (spec.learning_rates.empty() || spec.max_depths.empty()) {
    throw std::invalid_argument("empty grid");
  }
  if (spec.folds < 2) throw std::invalid_argument("folds must be >= 2");
  std::vector<TrainParams> grid;
  for (double learning_rate : spec.learning_rates) {
    for (size_t depth : spec.max_depths) {
      TrainParams params = spec.base;
      params.learning_rate = learning_rate;
      if (family == ModelFamily::kLeafWise) {
        if (spec.min_child_samples.empty()) {
          throw std::invalid_argument("empty grid");
        }
        for (size_t min_child : spec.min_child_samples) {
          params.strategy = LeafWise{size_t{1} << depth, min_child, depth};
          grid.push_back(params);
        }
      } else {
        if (spec.l2_leaf_regs.empty() || spec.border_counts.empty()) {
          throw std::invalid_argument("empty grid");
        }
        for (double l2 : spec.l2_leaf_regs) {
          for (size_t border_count : spec.border_counts) {
            params.strategy = LevelWise{depth, l2, border_count};
            grid.push_back(params);
          }
        }
      }
    }
  }
  for (const auto& params : grid) ValidateStrategy(params.strategy);
  return grid;
}

std::vector<std::vector<size_t>> KFoldIndices(size_t num_rows, size_t folds,
                                              uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("folds must be >= 2");
  if (num_rows < folds) {
    throw std::invalid_argument("fewer rows than folds");
  }
  const std::vector<size_t> order = Rng(seed).Permutation(num_rows);
  std::vector<std::vector<size_t>> result(folds);
  size_t start = 0;
  for (size_t k = 0; k < folds; ++k) {
    const size_t size = num_rows / folds + (k < num_rows % folds ? 1 : 0);
    result[k].assign(order.begin() + static_cast<ptrdiff_t>(start),
                     order.begin() + static_cast<ptrdiff_t>(start + size));
    std::sort(result[k].begin(), result[k].end());
    start += size;
  }
  return result;
}

GridSearchResult GridSearch(const Table& train, const GridSearchSpec& spec,
                            ModelFamily family, size_t threads) {
  const std::vector<TrainParams> grid = ExpandGrid(spec, family);
  const auto folds = KFoldIndices(train.num_rows(), spec.folds, spec.base.seed);

  std::vector<Table> fit_tables;
  std::vector<Table> held_out_tables;
  for (const auto& held_out : folds) {
    std::vector<bool> is_held_out(train.num_rows(), false);
    for (size_t row : held_out) is_held_out[row] = true;
    std::vector<size_t> fit_rows;
    for (size_t row = 0; row < train.num_rows(); ++row) {
      if (!is_held_out[row]) fit_rows.push_back(row);
    }
    fit_tables.push_back(train.SelectRows(fit_rows));
    held_out_tables.push_back(train.SelectRows(held_out));
  }

  std::vector<double> scores(grid.size() * folds.size());
  ParallelFor(scores.size(), threads, [&](size_t task) {
    const size_t config = task / folds.size();
    const size_t fold = task % folds.size();
    const Ensemble model = Fit(fit_tables[fold], grid[config]).model;
    const std::vector<double> predictions =
        model.Predict(held_out_tables[fold]);
    scores[task] =
        R2Score(predictions, held_out_tables[fold].target().values);
  });

  GridSearchResult result;
  for (size_t config = 0; config < grid.size(); ++config) {
    CvRow row;
    row.params = grid[config];
    row.fold_r2.assign(
        scores.begin() + static_cast<ptrdiff_t>(config * folds.size()),
        scores.begin() + static_cast<ptrdiff_t>((config + 1) * folds.size()));
    row.mean_r2 = std::accumulate(row.fold_r2.begin(), row.fold_r2.end(), 0.0) /
                  static_cast<double>(folds.size());
    if (result.table.empty() || row.mean_r2 > result.best_score) {
      result.best = row.params;
      result.best_score = row.mean_r2;
    }
    result.table.push_back(std::move(row));
  }
  return result;
}

std::string DescribeParams(const TrainParams& params) {
  std::ostringstream out;
  out << FamilyName(FamilyOf(params.strategy))
      << " learning_rate=" << params.learning_rate;
  if (const auto* leaf_wise = std::get_if<LeafWise>(&params.strategy)) {
    out << " max_depth=" << leaf_wise->max_depth
        << " num_leaves=" << leaf_wise->num_leaves
        << " min_child_samples=" << leaf_wise->min_child_samples;
  } else {
    const auto& level_wise = std::get<LevelWise>(params.strategy);
    out << " depth=" << level_wise.depth
        << " l2_leaf_reg=" << level_wise.l2_leaf_reg
        << " border_count=" << level_wise.border_count;
  }
  out << " n_trees=" << params.n_trees;
  return out.str();
}

}  // namespace amescause
