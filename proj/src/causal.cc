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

#include "amescause/causal.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>

#include "amescause/errors.h"
#include "amescause/parallel.h"

namespace amescause {
namespace {

constexpr std::string_view kTreatmentColumn = "__treatment__";

// Pseudo-outcomes need a residual second moment above this.
constexpr double kMinResidualVariance = 1e-10;

std::string FormatDouble(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, ptr);
}

double Mean(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

// Confounders plus a numeric target named `target_name`.
Table NuisanceTable(const Table& data, std::string_view treatment,
                    std::string_view outcome, std::string_view target_name,
                    std::vector<double> target) {
  Table table;
  for (const auto& column : data.columns()) {
    if (column.schema.role != ColumnRole::kFeature) continue;
    if (column.schema.name == treatment || column.schema.name == outcome) {
      continue;
    }
    table.SetColumn(column);
  }
  table.SetColumn(Column::Numeric(
      {std::string(target_name), ColumnKind::kNumeric, ColumnRole::kTarget},
      std::move(target)));
  return table;
}

// Out-of-fold predictions of the table's target.
std::vector<double> CrossFitPredict(
    const Table& table, const std::vector<std::vector<size_t>>& folds,
    const TrainParams& params) {
  std::vector<double> predictions(table.num_rows(), 0.0);
  std::vector<bool> held_out(table.num_rows());
  for (const auto& fold : folds) {
    std::fill(held_out.begin(), held_out.end(), false);
    for (size_t i : fold) held_out[i] = true;
    std::vector<size_t> train_rows;
    for (size_t i = 0; i < table.num_rows(); ++i) {
      if (!held_out[i]) train_rows.push_back(i);
    }
    const FitResult fit = Fit(table.SelectRows(train_rows), params);
    const std::vector<double> fold_predictions =
        fit.model.Predict(table.SelectRows(fold));
    for (size_t k = 0; k < fold.size(); ++k) {
      predictions[fold[k]] = fold_predictions[k];
    }
  }
  return predictions;
}

ContrastFit FitOneContrast(const Table& data, const TreatmentSpec& spec,
                           std::string_view outcome, std::string level,
                           std::vector<size_t> rows,
                           std::vector<double> treatment,
                           const DmlOptions& options) {
  ContrastFit fit;
  fit.level = std::move(level);
  fit.rows = std::move(rows);
  fit.treatment = std::move(treatment);
  const Column& outcome_column = data.column(outcome);
  for (size_t row : fit.rows) {
    fit.outcome.push_back(outcome_column.values[row]);
  }

  const double t_mean = Mean(fit.treatment);
  double t_variance = 0.0;
  for (double t : fit.treatment) t_variance += (t - t_mean) * (t - t_mean);
  if (!(t_variance > 0.0)) {
    throw DataError("treatment '" + spec.feature + "' is constant");
  }

  const Table subset = data.SelectRows(fit.rows);
  fit.folds = KFoldIndices(fit.rows.size(), options.folds, options.seed);
  fit.fold_of_row.assign(fit.rows.size(), 0);
  for (size_t k = 0; k < fit.folds.size(); ++k) {
    for (size_t i : fit.folds[k]) fit.fold_of_row[i] = k;
  }

  const Table y_table =
      NuisanceTable(subset, spec.feature, outcome, outcome, fit.outcome);
  const Table t_table = NuisanceTable(subset, spec.feature, outcome,
                                      kTreatmentColumn, fit.treatment);
  const std::vector<double> y_hat =
      CrossFitPredict(y_table, fit.folds, options.nuisance);
  const std::vector<double> t_hat =
      CrossFitPredict(t_table, fit.folds, options.nuisance);

  fit.t_residual.resize(fit.rows.size());
  fit.y_residual.resize(fit.rows.size());
  double residual_variance = 0.0;
  for (size_t i = 0; i < fit.rows.size(); ++i) {
    fit.t_residual[i] = fit.treatment[i] - t_hat[i];
    fit.y_residual[i] = fit.outcome[i] - y_hat[i];
    residual_variance += fit.t_residual[i] * fit.t_residual[i];
  }
  if (!(residual_variance > options.min_residual_variance_ratio * t_variance)) {
    throw DataError("treatment '" + spec.feature + "' " +
                    (fit.level.empty() ? "" : "level " + fit.level + " ") +
                    "is nearly determined by the other features");
  }

  const FinalStage final_stage =
      ResidualRegression(fit.t_residual, fit.y_residual);
  fit.effect.feature = spec.feature;
  fit.effect.contrast =
      fit.level.empty() ? "num" : fit.level + " v " + spec.baseline;
  fit.effect.ate = final_stage.ate;
  fit.effect.stderr = final_stage.stderr;
  fit.effect.p_value = final_stage.p_value;
  fit.effect.num_rows = fit.rows.size();
  return fit;
}

bool EffectLess(const CausalEffect& a, const CausalEffect& b) {
  if (a.p_value != b.p_value) return a.p_value < b.p_value;
  const double abs_a = std::abs(a.ate);
  const double abs_b = std::abs(b.ate);
  if (abs_a != abs_b) return abs_a > abs_b;
  if (a.feature != b.feature) return a.feature < b.feature;
  return a.contrast < b.contrast;
}

// ---------------------------------------------------------------------------
// Effect trees.

struct TreeSplit {
  size_t feature = 0;
  bool categorical = false;
  double threshold = 0.0;
  int32_t level = -1;
  double gain = 0.0;
};

bool GoesLeft(const Covariates& x, size_t feature, bool categorical,
              double threshold, int32_t level, size_t row) {
  const double value = x.columns[feature][row];
  if (categorical) return static_cast<int32_t>(value) == level;
  return value <= threshold;
}

class EffectTreeBuilder {
 public:
  EffectTreeBuilder(std::span<const double> targets, const Covariates& x,
                    const EffectTreeOptions& options, bool policy, double cost)
      : targets_(targets), x_(x), options_(options), policy_(policy),
        cost_(cost) {
    if (targets.empty()) throw DataError("cannot fit an effect tree on 0 rows");
    if (targets.size() != x.num_rows) {
      throw std::invalid_argument("effect and covariate lengths differ");
    }
    if (options.max_depth < 1) {
      throw std::invalid_argument("effect tree max_depth must be >= 1");
    }
    if (options.min_leaf < 1) {
      throw std::invalid_argument("effect tree min_leaf must be >= 1");
    }
  }

  EffectTree Build() {
    tree_.policy = policy_;
    tree_.cost = cost_;
    tree_.feature_names = x_.names;
    tree_.levels = x_.levels;
    std::vector<size_t> rows(x_.num_rows);
    std::iota(rows.begin(), rows.end(), 0);
    Grow(rows, 0);
    return std::move(tree_);
  }

 private:
  // Objective contributed by a node kept as a leaf.
  double LeafObjective(double sum, size_t count) const {
    if (policy_) return std::max(0.0, sum - cost_ * static_cast<double>(count));
    return sum * sum / static_cast<double>(count);
  }

  std::optional<TreeSplit> BestSplit(std::span<const size_t> rows) const {
    double total = 0.0;
    double scale = 0.0;
    for (size_t row : rows) {
      total += targets_[row];
      scale += policy_ ? std::abs(targets_[row] - cost_)
                       : targets_[row] * targets_[row];
    }
    const size_t n = rows.size();
    const double parent = LeafObjective(total, n);
    // Splits must beat rounding noise to count as improvements.
    const double floor = (policy_ ? 1e-9 : 1e-10) * scale;
    std::optional<TreeSplit> best;
    auto consider = [&](double left_sum, size_t left_count, TreeSplit split) {
      const size_t right_count = n - left_count;
      if (left_count < options_.min_leaf || right_count < options_.min_leaf) {
        return;
      }
      split.gain = LeafObjective(left_sum, left_count) +
                   LeafObjective(total - left_sum, right_count) - parent;
      if (split.gain > floor && (!best || split.gain > best->gain)) {
        best = split;
      }
    };

    std::vector<std::pair<double, size_t>> order(n);
    for (size_t f = 0; f < x_.names.size(); ++f) {
      const auto& column = x_.columns[f];
      if (x_.categorical[f]) {
        std::vector<double> sums(x_.levels[f].size(), 0.0);
        std::vector<size_t> counts(x_.levels[f].size(), 0);
        for (size_t row : rows) {
          const auto code = static_cast<size_t>(column[row]);
          sums[code] += targets_[row];
          ++counts[code];
        }
        for (size_t level = 0; level < sums.size(); ++level) {
          if (counts[level] == 0) continue;
          consider(sums[level], counts[level],
                   {f, true, 0.0, static_cast<int32_t>(level), 0.0});
        }
        continue;
      }
      for (size_t k = 0; k < n; ++k) order[k] = {column[rows[k]], rows[k]};
      std::sort(order.begin(), order.end());
      double left_sum = 0.0;
      for (size_t k = 0; k + 1 < n; ++k) {
        left_sum += targets_[order[k].second];
        if (order[k].first == order[k + 1].first) continue;
        const double threshold =
            order[k].first + (order[k + 1].first - order[k].first) / 2.0;
        consider(left_sum, k + 1, {f, false, threshold, -1, 0.0});
      }
    }
    return best;
  }

  size_t Grow(std::span<const size_t> rows, size_t depth) {
    const size_t index = tree_.nodes.size();
    tree_.nodes.emplace_back();
    double sum = 0.0;
    for (size_t row : rows) sum += targets_[row];
    {
      EffectTreeNode& node = tree_.nodes[index];
      node.count = rows.size();
      node.mean = sum / static_cast<double>(rows.size());
      node.net_effect = node.mean - cost_;
      node.treat = node.net_effect > 0.0;
    }
    if (depth >= options_.max_depth) return index;
    const std::optional<TreeSplit> split = BestSplit(rows);
    if (!split) return index;

    std::vector<size_t> left_rows;
    std::vector<size_t> right_rows;
    for (size_t row : rows) {
      (GoesLeft(x_, split->feature, split->categorical, split->threshold,
                split->level, row)
           ? left_rows
           : right_rows)
          .push_back(row);
    }
    {
      EffectTreeNode& node = tree_.nodes[index];
      node.feature = static_cast<int32_t>(split->feature);
      node.categorical = split->categorical;
      node.threshold = split->threshold;
      node.level = split->level;
      node.gain = split->gain;
    }
    const size_t left = Grow(left_rows, depth + 1);
    const size_t right = Grow(right_rows, depth + 1);
    tree_.nodes[index].left = static_cast<int32_t>(left);
    tree_.nodes[index].right = static_cast<int32_t>(right);
    return index;
  }

  std::span<const double> targets_;
  const Covariates& x_;
  EffectTreeOptions options_;
  bool policy_;
  double cost_;
  EffectTree tree_;
};

void AppendNodeText(const EffectTree& tree, size_t index, size_t depth,
                    std::string& out) {
  const EffectTreeNode& node = tree.nodes[index];
  out.append(2 * depth, ' ');
  std::string stats = "n=" + std::to_string(node.count) +
                      " cate_mean=" + FormatDouble(node.mean);
  if (tree.policy) stats += " net_effect=" + FormatDouble(node.net_effect);
  if (node.is_leaf()) {
    out += "leaf " + stats;
    if (tree.policy) out += node.treat ? " action=treat" : " action=no-treat";
    out += "\n";
    return;
  }
  const auto feature = static_cast<size_t>(node.feature);
  out += tree.feature_names[feature];
  if (node.categorical) {
    out += " == " + tree.levels[feature][static_cast<size_t>(node.level)];
  } else {
    out += " <= " + FormatDouble(node.threshold);
  }
  out += " [" + stats + "]\n";
  AppendNodeText(tree, static_cast<size_t>(node.left), depth + 1, out);
  AppendNodeText(tree, static_cast<size_t>(node.right), depth + 1, out);
}

}  // namespace

TreatmentSpec InferTreatment(const Table& data, std::string_view feature) {
  const Column& column = data.column(feature);
  if (column.schema.role != ColumnRole::kFeature) {
    throw DataError("'" + std::string(feature) + "' is not a feature column");
  }
  TreatmentSpec spec;
  spec.feature = std::string(feature);
  if (column.is_numeric()) {
    spec.kind = TreatmentKind::kContinuous;
    return spec;
  }
  std::set<int32_t> present;
  for (int32_t code : column.codes) {
    if (code != kNaCode) present.insert(code);
  }
  if (present.empty()) {
    throw DataError("treatment '" + spec.feature + "' has no non-NA values");
  }
  std::set<std::string> names;
  for (int32_t code : present) {
    names.insert(column.levels[static_cast<size_t>(code)]);
  }
  if (names == std::set<std::string>{"0", "1"}) {
    spec.kind = TreatmentKind::kBinary;
    spec.baseline = "0";
    return spec;
  }
  spec.kind = TreatmentKind::kCategorical;
  spec.baseline = *names.begin();
  return spec;
}

double NormalPValue(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

FinalStage ResidualRegression(std::span<const double> t_residual,
                              std::span<const double> y_residual) {
  if (t_residual.size() != y_residual.size() || t_residual.size() < 2) {
    throw std::invalid_argument("residual vectors must have equal length >= 2");
  }
  double tt = 0.0;
  double ty = 0.0;
  for (size_t i = 0; i < t_residual.size(); ++i) {
    tt += t_residual[i] * t_residual[i];
    ty += t_residual[i] * y_residual[i];
  }
  if (!(tt > 0.0)) throw DataError("treatment residuals have zero variance");
  FinalStage result;
  result.ate = ty / tt;
  double meat = 0.0;
  for (size_t i = 0; i < t_residual.size(); ++i) {
    const double e = y_residual[i] - result.ate * t_residual[i];
    meat += t_residual[i] * t_residual[i] * e * e;
  }
  result.stderr = std::sqrt(meat) / tt;
  if (result.stderr > 0.0) {
    result.p_value = NormalPValue(result.ate / result.stderr);
  } else {
    result.p_value = result.ate == 0.0 ? 1.0 : 0.0;
  }
  return result;
}

TrainParams DefaultNuisanceParams() {
  TrainParams params;
  params.strategy = LevelWise{3, 1.0, 32};
  params.n_trees = 200;
  params.learning_rate = 0.1;
  return params;
}

std::vector<ContrastFit> FitContrasts(const Table& data,
                                      const TreatmentSpec& treatment,
                                      std::string_view outcome,
                                      const DmlOptions& options) {
  if (options.folds < 2) throw ConfigError("causal folds must be >= 2");
  const Column& column = data.column(treatment.feature);
  const Column& outcome_column = data.column(outcome);
  if (!outcome_column.is_numeric()) {
    throw DataError("outcome '" + std::string(outcome) + "' is not numeric");
  }
  for (double y : outcome_column.values) {
    if (!std::isfinite(y)) throw DataError("outcome has non-finite values");
  }

  std::vector<ContrastFit> fits;
  if (treatment.kind == TreatmentKind::kContinuous) {
    if (!column.is_numeric()) {
      throw DataError("continuous treatment '" + treatment.feature +
                      "' is not numeric");
    }
    std::vector<size_t> rows(data.num_rows());
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> t = column.values;
    for (double v : t) {
      if (!std::isfinite(v)) {
        throw DataError("treatment '" + treatment.feature +
                        "' has missing values");
      }
    }
    fits.push_back(FitOneContrast(data, treatment, outcome, "", std::move(rows),
                                  std::move(t), options));
    return fits;
  }

  if (!column.is_categorical()) {
    throw DataError("treatment '" + treatment.feature + "' is not categorical");
  }
  const std::optional<int32_t> baseline = column.FindLevel(treatment.baseline);
  if (!baseline) {
    throw DataError("baseline '" + treatment.baseline + "' is not a level of '" +
                    treatment.feature + "'");
  }
  std::vector<size_t> counts(column.levels.size(), 0);
  for (int32_t code : column.codes) ++counts[static_cast<size_t>(code)];
  if (counts[static_cast<size_t>(*baseline)] < options.min_group_rows) {
    throw DataError("baseline '" + treatment.baseline + "' of '" +
                    treatment.feature + "' has fewer than " +
                    std::to_string(options.min_group_rows) + " rows");
  }
  size_t contrasts = 0;
  for (size_t level = 0; level < column.levels.size(); ++level) {
    if (static_cast<int32_t>(level) == *baseline || counts[level] == 0) {
      continue;
    }
    ++contrasts;
    if (counts[level] < options.min_group_rows) continue;
    std::vector<size_t> rows;
    std::vector<double> t;
    for (size_t i = 0; i < data.num_rows(); ++i) {
      const auto code = column.codes[i];
      if (code == *baseline || code == static_cast<int32_t>(level)) {
        rows.push_back(i);
        t.push_back(code == *baseline ? 0.0 : 1.0);
      }
    }
    fits.push_back(FitOneContrast(data, treatment, outcome,
                                  column.levels[level], std::move(rows),
                                  std::move(t), options));
  }
  if (contrasts == 0) {
    throw DataError("treatment '" + treatment.feature + "' is constant");
  }
  return fits;
}

std::vector<CausalEffect> DmlEffect(const Table& data,
                                    const TreatmentSpec& treatment,
                                    std::string_view outcome,
                                    const DmlOptions& options) {
  std::vector<CausalEffect> effects;
  for (auto& fit : FitContrasts(data, treatment, outcome, options)) {
    effects.push_back(std::move(fit.effect));
  }
  return effects;
}

EffectsResult EstimateEffects(const Table& data,
                              std::span<const std::string> features,
                              std::string_view outcome,
                              const DmlOptions& options, size_t threads) {
  struct Outcome {
    std::vector<CausalEffect> effects;
    std::vector<SkippedTreatment> skipped;
  };
  std::vector<Outcome> outcomes(features.size());
  ParallelFor(features.size(), threads, [&](size_t k) {
    const std::string& feature = features[k];
    try {
      const TreatmentSpec spec = InferTreatment(data, feature);
      const Column& column = data.column(feature);
      std::vector<ContrastFit> fits = FitContrasts(data, spec, outcome, options);
      std::set<std::string> estimated;
      for (auto& fit : fits) {
        estimated.insert(fit.level);
        outcomes[k].effects.push_back(std::move(fit.effect));
      }
      if (spec.kind != TreatmentKind::kContinuous) {
        std::set<int32_t> present(column.codes.begin(), column.codes.end());
        for (int32_t code : present) {
          const std::string& level = column.levels[static_cast<size_t>(code)];
          if (level == spec.baseline || estimated.count(level)) continue;
          outcomes[k].skipped.push_back(
              {feature, "contrast " + level + " v " + spec.baseline +
                            " has fewer than " +
                            std::to_string(options.min_group_rows) + " rows"});
        }
      }
    } catch (const DataError& e) {
      outcomes[k].skipped.push_back({feature, e.what()});
    }
  });
  EffectsResult result;
  for (auto& o : outcomes) {
    for (auto& e : o.effects) result.effects.push_back(std::move(e));
    for (auto& s : o.skipped) result.skipped.push_back(std::move(s));
  }
  return result;
}

std::vector<CausalEffect> SignificanceTable(std::vector<CausalEffect> effects) {
  std::sort(effects.begin(), effects.end(), EffectLess);
  return effects;
}

std::vector<std::string> CausalRankList(
    std::span<const CausalEffect> significance, double alpha) {
  std::vector<CausalEffect> ordered(significance.begin(), significance.end());
  std::sort(ordered.begin(), ordered.end(), EffectLess);
  std::vector<std::string> ranked;
  std::set<std::string> seen;
  for (const auto& effect : ordered) {
    if (!(effect.p_value < alpha)) continue;
    if (seen.insert(effect.feature).second) ranked.push_back(effect.feature);
  }
  return ranked;
}

std::string EffectsCsv(std::span<const CausalEffect> effects) {
  std::string out = "feature,contrast,ate,stderr,p_value\n";
  for (const auto& e : effects) {
    out += e.feature + "," + e.contrast + "," + FormatDouble(e.ate) + "," +
           FormatDouble(e.stderr) + "," + FormatDouble(e.p_value) + "\n";
  }
  return out;
}

std::vector<double> PseudoOutcomes(const ContrastFit& fit) {
  for (double t : fit.treatment) {
    if (t != 0.0 && t != 1.0) {
      throw DataError("pseudo-outcomes need a binary treatment");
    }
  }
  const size_t n = fit.t_residual.size();
  double tt = 0.0;
  for (double t : fit.t_residual) tt += t * t;
  const double scale = tt / static_cast<double>(n);
  if (!(scale > kMinResidualVariance)) {
    throw DataError("treatment residual variance is too small");
  }
  std::vector<double> psi(n);
  for (size_t i = 0; i < n; ++i) {
    psi[i] = fit.t_residual[i] * fit.y_residual[i] / scale;
  }
  return psi;
}

Covariates MakeCovariates(const Table& data) {
  Covariates x;
  x.num_rows = data.num_rows();
  for (const auto& name : data.FeatureNames()) {
    const Column& column = data.column(name);
    x.names.push_back(name);
    x.categorical.push_back(column.is_categorical());
    if (column.is_categorical()) {
      x.levels.push_back(column.levels);
      x.columns.emplace_back(column.codes.begin(), column.codes.end());
    } else {
      x.levels.emplace_back();
      x.columns.push_back(column.values);
    }
  }
  return x;
}

Covariates SelectCovariateRows(const Covariates& x,
                               std::span<const size_t> rows) {
  Covariates out = x;
  out.num_rows = rows.size();
  for (size_t f = 0; f < x.columns.size(); ++f) {
    out.columns[f].resize(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      out.columns[f][k] = x.columns[f][rows[k]];
    }
  }
  return out;
}

size_t EffectTree::LeafOf(const Covariates& x, size_t row) const {
  size_t index = 0;
  while (!nodes[index].is_leaf()) {
    const EffectTreeNode& node = nodes[index];
    index = static_cast<size_t>(
        GoesLeft(x, static_cast<size_t>(node.feature), node.categorical,
                 node.threshold, node.level, row)
            ? node.left
            : node.right);
  }
  return index;
}

size_t EffectTree::Depth() const {
  std::vector<size_t> depth(nodes.size(), 0);
  size_t deepest = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, depth[i]);
    if (nodes[i].is_leaf()) continue;
    depth[static_cast<size_t>(nodes[i].left)] = depth[i] + 1;
    depth[static_cast<size_t>(nodes[i].right)] = depth[i] + 1;
  }
  return deepest;
}

std::string EffectTree::ToText() const {
  std::string out;
  if (!nodes.empty()) AppendNodeText(*this, 0, 0, out);
  return out;
}

CateTree FitCateTree(std::span<const double> psi, const Covariates& x,
                     const EffectTreeOptions& options) {
  return EffectTreeBuilder(psi, x, options, false, 0.0).Build();
}

PolicyTree FitPolicyTree(std::span<const double> psi, const Covariates& x,
                         double cost, const EffectTreeOptions& options) {
  if (!(cost >= 0.0)) throw std::invalid_argument("treatment cost must be >= 0");
  return EffectTreeBuilder(psi, x, options, true, cost).Build();
}

double PolicyNetBenefit(const PolicyTree& tree, std::span<const double> psi,
                        const Covariates& x, double cost) {
  double total = 0.0;
  for (size_t i = 0; i < psi.size(); ++i) {
    if (tree.nodes[tree.LeafOf(x, i)].treat) total += psi[i] - cost;
  }
  return total;
}

WhatIfResult WhatIf(const Ensemble& model, const Table& rows,
                    std::string_view feature, std::string_view value) {
  const Column& column = rows.column(feature);
  if (rows.num_rows() == 0) throw DataError("what-if needs at least one row");
  std::vector<size_t> affected;
  if (column.is_numeric()) {
    double parsed = 0.0;
    const auto [ptr, ec] =
        std::from_chars(value.data(), value.data() + value.size(), parsed);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw DataError("'" + std::string(value) + "' is not a number");
    }
    for (size_t i = 0; i < rows.num_rows(); ++i) {
      if (!(column.values[i] == parsed)) affected.push_back(i);
    }
  } else {
    for (size_t i = 0; i < rows.num_rows(); ++i) {
      if (column.CellText(i) != value) affected.push_back(i);
    }
  }
  WhatIfResult result;
  result.n_affected = affected.size();
  result.baseline_mean = Mean(model.Predict(rows));
  if (affected.empty()) {
    result.counterfactual_mean = result.baseline_mean;
    return result;
  }
  result.counterfactual_mean =
      Mean(model.Predict(rows.WithValue(feature, affected, value)));
  return result;
}

}  // namespace amescause
