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
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "amescause/gbdt.h"
#include "amescause/random.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace amescause {
namespace {

// x0 <= 0.5 ? 10 : 20 with equal covers.
Tree Stump() {
  Tree tree;
  tree.nodes.resize(3);
  tree.nodes[0].feature = 0;
  tree.nodes[0].threshold = 0.5;
  tree.nodes[0].left = 1;
  tree.nodes[0].right = 2;
  tree.nodes[0].cover = 100;
  tree.nodes[1].value = 10;
  tree.nodes[1].cover = 50;
  tree.nodes[2].value = 20;
  tree.nodes[2].cover = 50;
  return tree;
}

// Two features, unequal covers.
Tree DepthTwo() {
  Tree tree;
  tree.nodes.resize(7);
  auto split = [&](int k, int f, double t, int l, int r, double cover) {
    tree.nodes[k].feature = f;
    tree.nodes[k].threshold = t;
    tree.nodes[k].left = l;
    tree.nodes[k].right = r;
    tree.nodes[k].cover = cover;
  };
  auto leaf = [&](int k, double v, double cover) {
    tree.nodes[k].value = v;
    tree.nodes[k].cover = cover;
  };
  split(0, 0, 0.5, 1, 4, 100);
  split(1, 1, 0.3, 2, 3, 70);
  leaf(2, 4, 20);
  leaf(3, -2, 50);
  split(4, 1, 0.8, 5, 6, 30);
  leaf(5, 7, 25);
  leaf(6, 11, 5);
  return tree;
}

TEST(TreeShapTest, StumpExample) {
  const std::vector<double> x = {0.0, 3.0, 3.0};
  const TreeShapResult r = TreeShapSingle(Stump(), x, 3);
  EXPECT_DOUBLE_EQ(r.expected_value, 15.0);
  EXPECT_DOUBLE_EQ(r.contributions[0], -5.0);
  EXPECT_EQ(r.contributions[1], 0.0);
  EXPECT_EQ(r.contributions[2], 0.0);
  const auto brute = BruteForceShapley(Stump(), x, 3);
  EXPECT_DOUBLE_EQ(brute[0], -5.0);
}

TEST(TreeShapTest, SingleLeaf) {
  Tree tree;
  tree.nodes.resize(1);
  tree.nodes[0].value = 4.5;
  tree.nodes[0].cover = 10;
  const std::vector<double> x = {1.0, 2.0};
  const TreeShapResult r = TreeShapSingle(tree, x, 2);
  EXPECT_EQ(r.expected_value, 4.5);
  EXPECT_EQ(r.contributions, (std::vector<double>{0.0, 0.0}));
}

TEST(TreeShapTest, DepthTwoMatchesBothOracles) {
  const Tree tree = DepthTwo();
  for (double x0 : {0.0, 1.0}) {
    for (double x1 : {0.0, 0.5, 1.0}) {
      const std::vector<double> x = {x0, x1};
      const auto fast = TreeShapSingle(tree, x, 2).contributions;
      const auto brute = BruteForceShapley(tree, x, 2);
      const auto perm = testing::PermutationShapley(tree, x, 2);
      for (size_t j = 0; j < 2; ++j) {
        EXPECT_NEAR(fast[j], brute[j], 1e-12);
        EXPECT_NEAR(brute[j], perm[j], 1e-12);
      }
    }
  }
}

TEST(TreeShapTest, ZeroCoverIsInvalid) {
  Tree tree = Stump();
  tree.nodes[1].cover = 0;
  tree.nodes[0].cover = 50;
  const std::vector<double> x = {0.0};
  EXPECT_THROW(TreeShapSingle(tree, x, 1), std::invalid_argument);
}

TEST(BruteForceTest, SingleFeatureIsPredictionMinusExpectation) {
  const Tree tree = Stump();
  const std::vector<double> x = {0.9};
  const auto phi = BruteForceShapley(tree, x, 1);
  EXPECT_DOUBLE_EQ(phi[0], tree.Predict(x) - tree.ExpectedValue());
}

TEST(BruteForceTest, TooManyFeatures) {
  Tree tree;
  const size_t depth = kMaxBruteForceFeatures + 1;
  // A chain of splits on distinct features.
  for (size_t f = 0; f < depth; ++f) {
    TreeNode split;
    split.feature = static_cast<int32_t>(f);
    split.left = static_cast<int32_t>(2 * f + 1);
    split.right = static_cast<int32_t>(2 * f + 2);
    split.cover = static_cast<double>(depth - f + 1);
    tree.nodes.push_back(split);
    TreeNode leaf;
    leaf.cover = 1;
    tree.nodes.push_back(leaf);
  }
  TreeNode last;
  last.cover = 1;
  tree.nodes.push_back(last);
  const std::vector<double> x(depth, 0.0);
  EXPECT_THROW(BruteForceShapley(tree, x, depth), std::invalid_argument);
}

// Random trees against the subset lattice and the ordering oracle.
TEST(TreeShapTest, RandomTreesMatchOracles) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const Tree tree = testing::RandomTree(rng);
    ASSERT_NO_THROW(tree.Validate());
    const auto x = testing::RandomRow(rng, 5);
    const TreeShapResult fast = TreeShapSingle(tree, x, 5);
    const auto brute = BruteForceShapley(tree, x, 5);
    const auto perm = testing::PermutationShapley(tree, x, 5);
    double total = fast.expected_value;
    for (size_t j = 0; j < 5; ++j) {
      EXPECT_NEAR(fast.contributions[j], brute[j], 1e-9) << trial;
      EXPECT_NEAR(brute[j], perm[j], 1e-9) << trial;
      total += fast.contributions[j];
    }
    EXPECT_NEAR(total, tree.Predict(x), 1e-9);
    EXPECT_NEAR(fast.expected_value, tree.ExpectedValue(), 1e-12);
  }
}

TEST(ConditionalExpectationTest, EndPoints) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Tree tree = testing::RandomTree(rng);
    const auto x = testing::RandomRow(rng, 5);
    EXPECT_NEAR(ConditionalExpectation(tree, x, std::vector<bool>(5, false)),
                tree.ExpectedValue(), 1e-9);
    EXPECT_EQ(ConditionalExpectation(tree, x, std::vector<bool>(5, true)),
              tree.Predict(x));
  }
}

class EnsembleShapTest : public ::testing::Test {
 protected:
  void SetUp() override {
    train_ = testing::MixedRegression(300, 31);
    TrainParams params;
    params.strategy = LevelWise{3, 1.0, 32};
    params.learning_rate = 0.2;
    params.n_trees = 20;
    model_ = Fit(train_, params).model;
  }
  Table train_;
  Ensemble model_;
};

TEST_F(EnsembleShapTest, Additivity) {
  const ShapMatrix shap = ExplainEnsemble(model_, train_);
  const auto pred = model_.Predict(train_);
  ASSERT_EQ(shap.num_rows, train_.num_rows());
  ASSERT_EQ(shap.feature_names, model_.FeatureNames());
  for (size_t i = 0; i < shap.num_rows; ++i) {
    double total = shap.base_value;
    for (double v : shap.row(i)) total += v;
    EXPECT_LT(std::abs(total - pred[i]) / std::abs(pred[i]), 1e-9);
  }
}

TEST_F(EnsembleShapTest, LinearityOverTrees) {
  const FeatureMatrix x = model_.Encode(train_);
  const ShapMatrix shap = ExplainEncoded(model_, x);
  double expected_base = model_.base_score();
  for (const Tree& tree : model_.trees()) {
    expected_base += model_.learning_rate() * tree.ExpectedValue();
  }
  EXPECT_NEAR(shap.base_value, expected_base, 1e-9);
  for (size_t i = 0; i < 10; ++i) {
    std::vector<double> sum(x.num_features, 0.0);
    for (const Tree& tree : model_.trees()) {
      const auto r = TreeShapSingle(tree, x.row(i), x.num_features);
      for (size_t j = 0; j < sum.size(); ++j) {
        sum[j] += model_.learning_rate() * r.contributions[j];
      }
    }
    for (size_t j = 0; j < sum.size(); ++j) {
      EXPECT_NEAR(shap.at(i, j), sum[j], 1e-9);
    }
  }
}

TEST_F(EnsembleShapTest, ThreadCountDoesNotChangeValues) {
  const ShapMatrix one = ExplainEnsemble(model_, train_, 1);
  const ShapMatrix four = ExplainEnsemble(model_, train_, 4);
  EXPECT_EQ(one.values, four.values);
}

TEST(EnsembleShapDummyTest, UnusedFeatureHasZeroAttribution) {
  Table t = testing::MixedRegression(200, 32);
  // Constant column: never split on.
  t.SetColumn(testing::NumericFeature("unused", std::vector<double>(200, 1.0)));
  TrainParams params;
  params.strategy = LeafWise{8, 5, 5};
  params.n_trees = 10;
  const Ensemble model = Fit(t, params).model;
  const ShapMatrix shap = ExplainEnsemble(model, t);
  const auto names = model.FeatureNames();
  const size_t j = static_cast<size_t>(
      std::find(names.begin(), names.end(), "unused") - names.begin());
  ASSERT_LT(j, names.size());
  for (size_t i = 0; i < shap.num_rows; ++i) EXPECT_EQ(shap.at(i, j), 0.0);
}

TEST(EnsembleShapEmptyTest, EmptyEnsemble) {
  const Table t = testing::MixedRegression(10, 33);
  std::vector<FeatureSpec> specs(2);
  specs[0].name = "a";
  specs[1].name = "b";
  const Ensemble model(specs, 3.0, 0.1, LevelWise{}, {});
  const ShapMatrix shap = ExplainEnsemble(model, t);
  EXPECT_EQ(shap.base_value, 3.0);
  for (double v : shap.values) EXPECT_EQ(v, 0.0);
}

TEST(EnsembleShapOneTreeTest, ScaledSingleTree) {
  std::vector<FeatureSpec> specs(3);
  for (size_t j = 0; j < 3; ++j) specs[j].name = "f" + std::to_string(j);
  const Ensemble model(specs, 1.0, 0.5, LevelWise{}, {DepthTwo()});
  FeatureMatrix x;
  x.num_rows = 1;
  x.num_features = 3;
  x.data = {1.0, 0.0, 9.0};
  const ShapMatrix shap = ExplainEncoded(model, x);
  const auto r = TreeShapSingle(DepthTwo(), x.row(0), 3);
  for (size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(shap.at(0, j), 0.5 * r.contributions[j]);
  }
}

TEST(GlobalImportanceTest, Examples) {
  ShapMatrix m;
  m.num_rows = 2;
  m.num_features = 2;
  m.feature_names = {"f1", "f0"};
  m.values = {1, 3, -1, -3};
  const ImportanceRanking r = GlobalImportance(m);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], (ImportanceEntry{"f0", 3.0}));
  EXPECT_EQ(r[1], (ImportanceEntry{"f1", 1.0}));

  ShapMatrix zero = m;
  zero.values.assign(4, 0.0);
  const ImportanceRanking z = GlobalImportance(zero);
  EXPECT_EQ(z[0].feature, "f0");
  EXPECT_EQ(z[1].feature, "f1");

  ShapMatrix one = m;
  one.num_rows = 1;
  one.values = {-2.5, 4.0};
  const ImportanceRanking o = GlobalImportance(one);
  EXPECT_EQ(o[0], (ImportanceEntry{"f0", 4.0}));
  EXPECT_EQ(o[1], (ImportanceEntry{"f1", 2.5}));

  ShapMatrix empty;
  EXPECT_THROW(GlobalImportance(empty), std::invalid_argument);
}

TEST(ExportTest, CsvLayouts) {
  ShapMatrix m;
  m.num_rows = 1;
  m.num_features = 2;
  m.feature_names = {"a", "b"};
  m.values = {0.5, -1.25};
  m.base_value = 3;
  const std::vector<std::string> ids = {"17"};
  EXPECT_EQ(ShapMatrixCsv(m, ids), "row_id,a,b,base_value\n17,0.5,-1.25,3\n");
  EXPECT_EQ(RankingCsv(GlobalImportance(m)),
            "rank,feature,score\n1,b,1.25\n2,a,0.5\n");
}

}  // namespace
}  // namespace amescause
