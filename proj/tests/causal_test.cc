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
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "amescause/errors.h"
#include "amescause/gbdt.h"
#include "amescause/random.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace amescause {
namespace {

using testing::CategoricalFeature;
using testing::NumericFeature;

DmlOptions FastOptions() {
  DmlOptions options;
  options.nuisance.n_trees = 60;
  options.nuisance.learning_rate = 0.2;
  return options;
}

TEST(InferTreatmentTest, Kinds) {
  Table t;
  t.SetColumn(testing::Ids(4));
  t.SetColumn(NumericFeature("num", {1, 2, 3, 4}));
  t.SetColumn(CategoricalFeature("flag", {"0", "1", "1", "0"}));
  t.SetColumn(CategoricalFeature("style", {"Twnhs", "1Fam", "", "Duplex"}));
  t.SetColumn(testing::Target("y", {1, 2, 3, 4}));
  EXPECT_EQ(InferTreatment(t, "num").kind, TreatmentKind::kContinuous);
  const TreatmentSpec flag = InferTreatment(t, "flag");
  EXPECT_EQ(flag.kind, TreatmentKind::kBinary);
  EXPECT_EQ(flag.baseline, "0");
  const TreatmentSpec style = InferTreatment(t, "style");
  EXPECT_EQ(style.kind, TreatmentKind::kCategorical);
  EXPECT_EQ(style.baseline, "1Fam");
  EXPECT_THROW(InferTreatment(t, "y"), DataError);
  EXPECT_THROW(InferTreatment(t, "absent"), DataError);
}

TEST(NormalPValueTest, KnownQuantilesAndMonotone) {
  EXPECT_EQ(NormalPValue(0.0), 1.0);
  EXPECT_NEAR(NormalPValue(1.959963984540054), 0.05, 1e-12);
  EXPECT_NEAR(NormalPValue(-2.5758293035489), 0.01, 1e-12);
  double previous = 1.0;
  for (double z = 0.1; z < 40.0; z += 0.1) {
    const double p = NormalPValue(z);
    EXPECT_LE(p, previous);
    EXPECT_GE(p, 0.0);
    previous = p;
  }
}

TEST(ResidualRegressionTest, HandComputed) {
  const std::vector<double> t = {1, -1, 2, 0.5};
  const std::vector<double> y = {2, -1, 5, 0};
  const double tt = 1 + 1 + 4 + 0.25;
  const double theta = (2 + 1 + 10 + 0) / tt;
  double meat = 0.0;
  for (size_t i = 0; i < t.size(); ++i) {
    const double e = y[i] - theta * t[i];
    meat += t[i] * t[i] * e * e;
  }
  const FinalStage s = ResidualRegression(t, y);
  EXPECT_NEAR(s.ate, theta, 1e-15);
  EXPECT_NEAR(s.stderr, std::sqrt(meat) / tt, 1e-15);
  EXPECT_NEAR(s.p_value, NormalPValue(theta / (std::sqrt(meat) / tt)), 1e-15);
  const std::vector<double> zero(4, 0.0);
  EXPECT_THROW(ResidualRegression(zero, y), DataError);
}

TEST(DmlTest, RecoversPlantedContinuousEffect) {
  for (uint64_t seed : {1u, 2u, 3u}) {
    const Table t = testing::ConfoundedContinuous(1000, 5.0, seed);
    const auto effects = DmlEffect(t, InferTreatment(t, "T"), "Y", FastOptions());
    ASSERT_EQ(effects.size(), 1u);
    EXPECT_EQ(effects[0].contrast, "num");
    EXPECT_LT(std::abs(effects[0].ate - 5.0), 4.0 * effects[0].stderr)
        << "seed " << seed << " ate " << effects[0].ate;
    EXPECT_LT(effects[0].p_value, 1e-10);
  }
}

TEST(DmlTest, NullEffectIsInsignificantMostly) {
  int significant = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Table t = testing::NullEffect(600, seed);
    const auto effects = DmlEffect(t, InferTreatment(t, "T"), "Y", FastOptions());
    if (effects[0].p_value <= 0.05) ++significant;
  }
  EXPECT_LE(significant, 3);
}

// Refitting each fold's nuisances on the complement of that fold reproduces
// the stored residuals, so no row contributes to its own nuisance fit.
TEST(DmlTest, CrossFittingBookkeeping) {
  const Table t = testing::ConfoundedContinuous(300, 2.0, 9);
  DmlOptions options = FastOptions();
  options.folds = 3;
  const auto fits = FitContrasts(t, InferTreatment(t, "T"), "Y", options);
  ASSERT_EQ(fits.size(), 1u);
  const ContrastFit& fit = fits[0];
  ASSERT_EQ(fit.folds.size(), 3u);
  std::vector<int> seen(fit.rows.size(), 0);
  for (size_t k = 0; k < fit.folds.size(); ++k) {
    for (size_t i : fit.folds[k]) {
      ++seen[i];
      EXPECT_EQ(fit.fold_of_row[i], k);
    }
  }
  for (int s : seen) EXPECT_EQ(s, 1);

  const std::vector<std::string> drop = {"T"};
  const Table y_data = t.DropColumns(drop);
  Table t_data = t.DropColumns(std::vector<std::string>{"T", "Y"});
  t_data.SetColumn(testing::Target("__t", t.column("T").values));
  for (size_t k = 0; k < fit.folds.size(); ++k) {
    std::vector<bool> held(t.num_rows(), false);
    for (size_t i : fit.folds[k]) held[i] = true;
    std::vector<size_t> train_rows;
    for (size_t i = 0; i < t.num_rows(); ++i) {
      if (!held[i]) train_rows.push_back(i);
    }
    const Table fold_rows = y_data.SelectRows(fit.folds[k]);
    const auto y_hat = Fit(y_data.SelectRows(train_rows), options.nuisance)
                           .model.Predict(fold_rows);
    const auto t_hat = Fit(t_data.SelectRows(train_rows), options.nuisance)
                           .model.Predict(t_data.SelectRows(fit.folds[k]));
    for (size_t j = 0; j < fit.folds[k].size(); ++j) {
      const size_t i = fit.folds[k][j];
      EXPECT_DOUBLE_EQ(fit.y_residual[i], fit.outcome[i] - y_hat[j]);
      EXPECT_DOUBLE_EQ(fit.t_residual[i], fit.treatment[i] - t_hat[j]);
    }
  }
}

TEST(DmlTest, CategoricalContrastsUseLevelAndBaselineRows) {
  Rng rng(4);
  const size_t n = 400;
  std::vector<std::string> style(n);
  std::vector<double> x(n);
  std::vector<double> y(n);
  const char* levels[] = {"A", "B", "C", "D"};
  for (size_t i = 0; i < n; ++i) {
    x[i] = rng.Normal();
    // D is rare.
    const size_t level = i < 10 ? 3 : rng.Below(3);
    style[i] = levels[level];
    y[i] = x[i] + (level == 1 ? 3.0 : 0.0) + rng.Normal();
  }
  Table t;
  t.SetColumn(testing::Ids(n));
  t.SetColumn(NumericFeature("x", x));
  t.SetColumn(CategoricalFeature("style", style));
  t.SetColumn(testing::Target("Y", y));
  const auto fits = FitContrasts(t, InferTreatment(t, "style"), "Y",
                                 FastOptions());
  ASSERT_EQ(fits.size(), 2u);
  EXPECT_EQ(fits[0].effect.contrast, "B v A");
  EXPECT_EQ(fits[1].effect.contrast, "C v A");
  for (const auto& fit : fits) {
    for (size_t k = 0; k < fit.rows.size(); ++k) {
      const std::string level = t.column("style").CellText(fit.rows[k]);
      EXPECT_TRUE(level == "A" || level == fit.level);
      EXPECT_EQ(fit.treatment[k], level == "A" ? 0.0 : 1.0);
    }
  }
  EXPECT_LT(std::abs(fits[0].effect.ate - 3.0), 4.0 * fits[0].effect.stderr);

  const std::vector<std::string> features = {"style", "x"};
  const EffectsResult all = EstimateEffects(t, features, "Y", FastOptions(), 1);
  EXPECT_EQ(all.effects.size(), 3u);
  ASSERT_EQ(all.skipped.size(), 1u);
  EXPECT_NE(all.skipped[0].reason.find("D v A"), std::string::npos);
}

TEST(DmlTest, ConstantTreatmentAndNearDeterminedTreatment) {
  Table t = testing::ConfoundedContinuous(200, 1.0, 5);
  t.SetColumn(NumericFeature("const", std::vector<double>(200, 2.0)));
  EXPECT_THROW(DmlEffect(t, InferTreatment(t, "const"), "Y", FastOptions()),
               DataError);
  // A copy of x0 is fully predictable from x0.
  t.SetColumn(NumericFeature("copy", t.column("x0").values));
  EXPECT_THROW(DmlEffect(t, InferTreatment(t, "copy"), "Y", FastOptions()),
               DataError);
  DmlOptions bad = FastOptions();
  bad.folds = 1;
  EXPECT_THROW(DmlEffect(t, InferTreatment(t, "T"), "Y", bad), ConfigError);
}

TEST(DmlTest, ThreadCountDoesNotChangeEstimates) {
  const Table t = testing::ConfoundedContinuous(300, 2.0, 6);
  const std::vector<std::string> features = {"T", "x1", "x2"};
  const auto one = EstimateEffects(t, features, "Y", FastOptions(), 1);
  const auto three = EstimateEffects(t, features, "Y", FastOptions(), 3);
  EXPECT_EQ(one.effects, three.effects);
}

TEST(PseudoOutcomeTest, MeanEqualsAte) {
  testing::TwoRegimeSpec spec;
  spec.n = 800;
  const Table t = testing::TwoRegime(spec, 3);
  const auto fits = FitContrasts(t, InferTreatment(t, "T"), "Y", FastOptions());
  ASSERT_EQ(fits.size(), 1u);
  const auto psi = PseudoOutcomes(fits[0]);
  const double mean =
      std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
  EXPECT_NEAR(mean, fits[0].effect.ate, 1e-9 * std::abs(fits[0].effect.ate));
}

TEST(PseudoOutcomeTest, HomogeneousEffect) {
  testing::TwoRegimeSpec spec;
  spec.n = 2000;
  spec.low_effect = 3.0;
  spec.high_effect = 3.0;
  const Table t = testing::TwoRegime(spec, 8);
  const auto fits = FitContrasts(t, InferTreatment(t, "T"), "Y", FastOptions());
  const auto psi = PseudoOutcomes(fits[0]);
  const double mean =
      std::accumulate(psi.begin(), psi.end(), 0.0) / static_cast<double>(psi.size());
  EXPECT_NEAR(mean, 3.0, 0.4);
}

TEST(PseudoOutcomeTest, RequiresBinaryTreatment) {
  const Table t = testing::ConfoundedContinuous(200, 1.0, 2);
  const auto fits = FitContrasts(t, InferTreatment(t, "T"), "Y", FastOptions());
  EXPECT_THROW(PseudoOutcomes(fits[0]), DataError);
}

TEST(SignificanceTableTest, Ordering) {
  std::vector<CausalEffect> effects = {
      {"a", "num", 1.0, 1.0, 0.5, 10},
      {"b", "num", 1.0, 1.0, 0.001, 10},
  };
  auto table = SignificanceTable(effects);
  EXPECT_EQ(table[0].feature, "b");
  EXPECT_EQ(table[1].feature, "a");

  effects = {
      {"c", "num", 2.0, 1.0, 0.01, 10},
      {"a", "num", -5.0, 1.0, 0.01, 10},
      {"b", "num", 2.0, 1.0, 0.01, 10},
      {"b", "X v Y", 0.5, 1.0, 0.0, 10},
  };
  table = SignificanceTable(effects);
  EXPECT_EQ(table[0].contrast, "X v Y");
  EXPECT_EQ(table[1].feature, "a");
  EXPECT_EQ(table[2].feature, "b");
  EXPECT_EQ(table[3].feature, "c");
  // Feature rank follows its best contrast; insignificant features drop out.
  effects.push_back({"d", "num", 9.0, 1.0, 0.2, 10});
  EXPECT_EQ(CausalRankList(effects, 0.05),
            (std::vector<std::string>{"b", "a", "c"}));
}

TEST(SignificanceTableTest, CsvExport) {
  const std::vector<CausalEffect> effects = {{"f", "L v B", 1.5, 0.25, 0.001, 3}};
  EXPECT_EQ(EffectsCsv(effects),
            "feature,contrast,ate,stderr,p_value\nf,L v B,1.5,0.25,0.001\n");
}

Covariates RandomCovariates(Rng& rng, size_t n) {
  Table t;
  std::vector<double> a(n);
  std::vector<double> b(n);
  std::vector<std::string> c(n);
  for (size_t i = 0; i < n; ++i) {
    a[i] = rng.Normal();
    b[i] = static_cast<double>(rng.Below(10));
    c[i] = std::string(1, static_cast<char>('p' + rng.Below(4)));
  }
  t.SetColumn(NumericFeature("a", a));
  t.SetColumn(NumericFeature("b", b));
  t.SetColumn(CategoricalFeature("c", c));
  return MakeCovariates(t);
}

TEST(CateTreeTest, ConstantEffectGivesSingleLeaf) {
  Rng rng(1);
  const Covariates x = RandomCovariates(rng, 200);
  const std::vector<double> psi(200, 2.5);
  const CateTree tree = FitCateTree(psi, x, {2, 10});
  ASSERT_EQ(tree.nodes.size(), 1u);
  EXPECT_EQ(tree.nodes[0].mean, 2.5);
  EXPECT_THROW(FitCateTree(std::vector<double>{}, Covariates{}, {2, 10}),
               DataError);
}

TEST(CateTreeTest, PlantedSplitAndWeightedMeans) {
  Rng rng(2);
  const size_t n = 1000;
  const Covariates x = RandomCovariates(rng, n);
  std::vector<double> psi(n);
  for (size_t i = 0; i < n; ++i) {
    psi[i] = (x.columns[0][i] > 0.3 ? 6.0 : 2.0) + rng.Normal();
  }
  const CateTree tree = FitCateTree(psi, x, {2, 20});
  EXPECT_EQ(tree.nodes[0].feature, 0);
  EXPECT_NEAR(tree.nodes[0].threshold, 0.3, 0.15);
  EXPECT_LE(tree.Depth(), 2u);
  for (const auto& node : tree.nodes) {
    if (node.is_leaf()) continue;
    const auto& l = tree.nodes[static_cast<size_t>(node.left)];
    const auto& r = tree.nodes[static_cast<size_t>(node.right)];
    EXPECT_EQ(node.count, l.count + r.count);
    EXPECT_NEAR(node.mean * node.count, l.mean * l.count + r.mean * r.count,
                1e-9 * node.count * (std::abs(node.mean) + 1));
    EXPECT_GE(l.count, 20u);
    EXPECT_GE(r.count, 20u);
  }
  // Leaves partition the rows, with the recorded counts and means.
  std::vector<double> sums(tree.nodes.size(), 0.0);
  std::vector<size_t> counts(tree.nodes.size(), 0);
  for (size_t i = 0; i < n; ++i) {
    const size_t leaf = tree.LeafOf(x, i);
    sums[leaf] += psi[i];
    ++counts[leaf];
  }
  for (size_t k = 0; k < tree.nodes.size(); ++k) {
    if (!tree.nodes[k].is_leaf()) continue;
    EXPECT_EQ(counts[k], tree.nodes[k].count);
    EXPECT_NEAR(sums[k] / counts[k], tree.nodes[k].mean, 1e-9);
  }
  EXPECT_NE(tree.ToText().find("a <= "), std::string::npos);
}

TEST(CateTreeTest, CategoricalRegime) {
  Rng rng(3);
  const size_t n = 800;
  const Covariates x = RandomCovariates(rng, n);
  std::vector<double> psi(n);
  const int32_t level_r = 3;  // "r" after NA, p, q.
  ASSERT_EQ(x.levels[2][level_r], "r");
  for (size_t i = 0; i < n; ++i) {
    psi[i] = (x.columns[2][i] == level_r ? 8.0 : 1.0) + 0.5 * rng.Normal();
  }
  const CateTree tree = FitCateTree(psi, x, {1, 20});
  EXPECT_EQ(tree.nodes[0].feature, 2);
  EXPECT_TRUE(tree.nodes[0].categorical);
  EXPECT_EQ(tree.nodes[0].level, level_r);
}

TEST(PolicyTreeTest, ConstantActions) {
  Rng rng(4);
  const Covariates x = RandomCovariates(rng, 100);
  std::vector<double> high(100);
  std::vector<double> low(100);
  for (size_t i = 0; i < 100; ++i) {
    high[i] = 5.0 + rng.Uniform();
    low[i] = 0.5 * rng.Uniform();
  }
  const PolicyTree treat = FitPolicyTree(high, x, 1.0, {2, 10});
  ASSERT_EQ(treat.nodes.size(), 1u);
  EXPECT_TRUE(treat.nodes[0].treat);
  const PolicyTree skip = FitPolicyTree(low, x, 1.0, {2, 10});
  ASSERT_EQ(skip.nodes.size(), 1u);
  EXPECT_FALSE(skip.nodes[0].treat);
  EXPECT_EQ(PolicyNetBenefit(skip, low, x, 1.0), 0.0);
  EXPECT_THROW(FitPolicyTree(low, x, -1.0, {2, 10}), std::invalid_argument);
}

TEST(PolicyTreeTest, DominatesConstantPoliciesAndLeafRule) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 300;
    const Covariates x = RandomCovariates(rng, n);
    std::vector<double> psi(n);
    const double cost = rng.Uniform() * 3.0;
    for (size_t i = 0; i < n; ++i) {
      psi[i] = (x.columns[0][i] > 0 ? 4.0 : -1.0) +
               (x.columns[1][i] > 6 ? -3.0 : 0.0) + 2.0 * rng.Normal();
    }
    const PolicyTree tree = FitPolicyTree(psi, x, cost, {2, 20});
    double treat_all = 0.0;
    for (size_t i = 0; i < n; ++i) treat_all += psi[i] - cost;
    const double benefit = PolicyNetBenefit(tree, psi, x, cost);
    EXPECT_GE(benefit, treat_all) << trial;
    EXPECT_GE(benefit, 0.0) << trial;
    for (const auto& node : tree.nodes) {
      EXPECT_EQ(node.treat, node.mean - cost > 0.0);
      EXPECT_DOUBLE_EQ(node.net_effect, node.mean - cost);
    }
  }
}

class WhatIfTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(6);
    const size_t n = 300;
    std::vector<double> x(n);
    std::vector<std::string> flag(n);
    std::vector<double> y(n);
    for (size_t i = 0; i < n; ++i) {
      x[i] = rng.Normal();
      flag[i] = rng.Uniform() < 0.4 ? "1" : "0";
      y[i] = x[i] + (flag[i] == "1" ? 2.0 : 0.0) + 0.1 * rng.Normal();
    }
    table_.SetColumn(testing::Ids(n));
    table_.SetColumn(NumericFeature("x", x));
    table_.SetColumn(CategoricalFeature("HasPorch", flag));
    table_.SetColumn(testing::Target("y", y));
    TrainParams params;
    params.strategy = LeafWise{8, 5, 5};
    params.n_trees = 30;
    model_ = Fit(table_, params).model;
  }
  Table table_;
  Ensemble model_;
};

TEST_F(WhatIfTest, CountsAndDirection) {
  size_t porchless = 0;
  for (size_t i = 0; i < table_.num_rows(); ++i) {
    porchless += table_.column("HasPorch").CellText(i) == "0";
  }
  const WhatIfResult r = WhatIf(model_, table_, "HasPorch", "1");
  EXPECT_EQ(r.n_affected, porchless);
  EXPECT_GT(r.counterfactual_mean, r.baseline_mean);
  double mean = 0.0;
  for (double p : model_.Predict(table_)) mean += p;
  EXPECT_DOUBLE_EQ(r.baseline_mean, mean / table_.num_rows());
}

TEST_F(WhatIfTest, NullInterventionAndIdempotence) {
  std::vector<size_t> rows(table_.num_rows());
  std::iota(rows.begin(), rows.end(), 0);
  const Table treated = table_.WithValue("HasPorch", rows, "1");
  const WhatIfResult null = WhatIf(model_, treated, "HasPorch", "1");
  EXPECT_EQ(null.n_affected, 0u);
  EXPECT_EQ(null.baseline_mean, null.counterfactual_mean);
  const WhatIfResult once = WhatIf(model_, table_, "HasPorch", "1");
  EXPECT_EQ(once.counterfactual_mean, null.baseline_mean);
  const WhatIfResult numeric = WhatIf(model_, table_, "x", "0.5");
  EXPECT_EQ(numeric.n_affected, table_.num_rows());
  EXPECT_THROW(WhatIf(model_, table_, "x", "abc"), DataError);
  EXPECT_THROW(WhatIf(model_, table_, "missing", "1"), DataError);
}

TEST_F(WhatIfTest, SingleRowMatchesHandTraversal) {
  std::vector<size_t> first;
  for (size_t i = 0; i < table_.num_rows() && first.empty(); ++i) {
    if (table_.column("HasPorch").CellText(i) == "0") first.push_back(i);
  }
  const Table row = table_.SelectRows(first);
  const FeatureSpec& spec = model_.features()[1];
  ASSERT_EQ(spec.name, "HasPorch");
  const double flipped_code = static_cast<double>(
      std::find(spec.levels.begin(), spec.levels.end(), "1") -
      spec.levels.begin());
  std::vector<double> encoded = {row.column("x").values[0], flipped_code};
  double expected = model_.base_score();
  for (const Tree& tree : model_.trees()) {
    size_t k = 0;
    while (!tree.nodes[k].is_leaf()) {
      const TreeNode& node = tree.nodes[k];
      const double v = encoded[static_cast<size_t>(node.feature)];
      const bool left =
          node.categorical
              ? std::count(node.left_levels.begin(), node.left_levels.end(),
                           static_cast<int32_t>(v)) > 0
              : v <= node.threshold;
      k = static_cast<size_t>(left ? node.left : node.right);
    }
    expected += model_.learning_rate() * tree.nodes[k].value;
  }
  const WhatIfResult r = WhatIf(model_, row, "HasPorch", "1");
  EXPECT_EQ(r.n_affected, 1u);
  EXPECT_NEAR(r.counterfactual_mean, expected, 1e-9);
}

}  // namespace
}  // namespace amescause
