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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "amescause/errors.h"
#include "amescause/gbdt.h"

namespace amescause {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// A split must beat this fraction of the node's sum of squared gradients.
// Filters out gains that are pure rounding noise.
constexpr double kRelativeGainFloor = 1e-12;

double Midpoint(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

}  // namespace

bool TreeNode::GoesLeft(double x) const {
  if (categorical) {
    const auto code = static_cast<int32_t>(x);
    return std::binary_search(left_levels.begin(), left_levels.end(), code);
  }
  return x <= threshold;
}

size_t Tree::LeafIndex(std::span<const double> row) const {
  size_t index = 0;
  while (!nodes[index].is_leaf()) {
    const TreeNode& node = nodes[index];
    index = static_cast<size_t>(
        node.GoesLeft(row[static_cast<size_t>(node.feature)]) ? node.left
                                                              : node.right);
  }
  return index;
}

double Tree::ExpectedValue() const {
  double weighted = 0.0;
  for (const auto& node : nodes) {
    if (node.is_leaf()) weighted += node.cover * node.value;
  }
  return weighted / nodes.front().cover;
}

size_t Tree::NumLeaves() const {
  return static_cast<size_t>(
      std::count_if(nodes.begin(), nodes.end(),
                    [](const TreeNode& n) { return n.is_leaf(); }));
}

size_t Tree::Depth() const {
  std::vector<size_t> depth(nodes.size(), 0);
  size_t max_depth = 0;
  for (size_t i = 0; i < nodes.size(); ++i) {
    max_depth = std::max(max_depth, depth[i]);
    if (!nodes[i].is_leaf()) {
      depth[static_cast<size_t>(nodes[i].left)] = depth[i] + 1;
      depth[static_cast<size_t>(nodes[i].right)] = depth[i] + 1;
    }
  }
  return max_depth;
}

void Tree::Validate() const {
  if (nodes.empty()) throw std::invalid_argument("tree has no nodes");
  // Pre-order: a node's left child directly follows it.
  for (size_t i = 0; i < nodes.size(); ++i) {
    const TreeNode& node = nodes[i];
    if (!(node.cover > 0.0)) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " has non-positive cover");
    }
    if (node.is_leaf()) continue;
    const auto left = static_cast<size_t>(node.left);
    const auto right = static_cast<size_t>(node.right);
    if (node.left < 0 || node.right < 0 || left >= nodes.size() ||
        right >= nodes.size() || left != i + 1 || right <= left) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " breaks the pre-order layout");
    }
    if (nodes[left].cover + nodes[right].cover != node.cover) {
      throw std::invalid_argument("node " + std::to_string(i) +
                                  " cover differs from its children's sum");
    }
  }
}

uint16_t FeatureBins::BinOf(double value) const {
  if (categorical) {
    const auto code = static_cast<size_t>(value);
    return static_cast<uint16_t>(code < num_levels ? code : 0);
  }
  if (std::isnan(value)) return static_cast<uint16_t>(upper_edges.size() - 1);
  const auto it =
      std::lower_bound(upper_edges.begin(), upper_edges.end(), value);
  return static_cast<uint16_t>(it - upper_edges.begin());
}

FeatureBins BinValues(std::span<const double> values, size_t max_bins) {
  if (max_bins < 2) throw std::invalid_argument("max_bins must be >= 2");
  if (max_bins > std::numeric_limits<uint16_t>::max()) {
    throw std::invalid_argument("max_bins too large");
  }
  std::map<double, size_t> counts;
  size_t total = 0;
  for (double v : values) {
    if (std::isnan(v)) continue;
    ++counts[v];
    ++total;
  }
  FeatureBins bins;
  if (counts.size() <= 1) {
    bins.upper_edges = {kInf};
    return bins;
  }
  std::vector<std::pair<double, size_t>> distinct(counts.begin(), counts.end());
  if (distinct.size() <= max_bins) {
    for (size_t i = 0; i + 1 < distinct.size(); ++i) {
      bins.upper_edges.push_back(
          Midpoint(distinct[i].first, distinct[i + 1].first));
    }
    bins.upper_edges.push_back(kInf);
    return bins;
  }
  // Close a bin once the running count reaches the next multiple of
  // total / max_bins. Heavy ties consume several boundaries at once.
  const double per_bin =
      static_cast<double>(total) / static_cast<double>(max_bins);
  size_t next_boundary = 1;
  size_t running = 0;
  for (size_t i = 0; i + 1 < distinct.size(); ++i) {
    running += distinct[i].second;
    if (static_cast<double>(running) + 1e-9 <
        per_bin * static_cast<double>(next_boundary)) {
      continue;
    }
    bins.upper_edges.push_back(
        Midpoint(distinct[i].first, distinct[i + 1].first));
    while (per_bin * static_cast<double>(next_boundary) <=
           static_cast<double>(running) + 1e-9) {
      ++next_boundary;
    }
    if (bins.upper_edges.size() + 1 == max_bins) break;
  }
  bins.upper_edges.push_back(kInf);
  return bins;
}

std::vector<FeatureBins> BinFeatures(const Table& table, size_t border_count) {
  if (border_count < 2) throw std::invalid_argument("border_count must be >= 2");
  std::vector<FeatureBins> result;
  for (const auto& name : table.FeatureNames()) {
    const Column& column = table.column(name);
    if (column.is_numeric()) {
      result.push_back(BinValues(column.values, border_count));
    } else {
      FeatureBins bins;
      bins.categorical = true;
      bins.num_levels = column.levels.size();
      result.push_back(std::move(bins));
    }
  }
  return result;
}

BinnedMatrix BinMatrix(const FeatureMatrix& x,
                       std::span<const FeatureEncoding> encodings,
                       std::span<const size_t> num_levels, size_t max_bins) {
  BinnedMatrix binned;
  binned.num_rows = x.num_rows;
  binned.bins.resize(x.num_features);
  binned.codes.resize(x.num_features);
  std::vector<double> column(x.num_rows);
  for (size_t f = 0; f < x.num_features; ++f) {
    for (size_t i = 0; i < x.num_rows; ++i) column[i] = x.at(i, f);
    FeatureBins& bins = binned.bins[f];
    if (encodings[f] == FeatureEncoding::kCategoricalCodes) {
      bins.categorical = true;
      bins.num_levels = num_levels[f];
    } else {
      bins = BinValues(column, max_bins);
    }
    auto& codes = binned.codes[f];
    codes.resize(x.num_rows);
    for (size_t i = 0; i < x.num_rows; ++i) codes[i] = bins.BinOf(column[i]);
  }
  return binned;
}

double SplitGain(double left_grad, double left_hess, double right_grad,
                 double right_hess, double l2) {
  const double grad = left_grad + right_grad;
  const double hess = left_hess + right_hess;
  return left_grad * left_grad / (left_hess + l2) +
         right_grad * right_grad / (right_hess + l2) -
         grad * grad / (hess + l2);
}

std::optional<SplitCandidate> FindBestSplit(std::span<const HistogramBin> bins,
                                            double l2,
                                            size_t min_child_samples,
                                            size_t feature) {
  if (bins.size() < 2) return std::nullopt;
  min_child_samples = std::max<size_t>(min_child_samples, 1);
  double total_grad = 0.0;
  double total_hess = 0.0;
  size_t total_count = 0;
  for (const auto& bin : bins) {
    total_grad += bin.grad_sum;
    total_hess += bin.hess_sum;
    total_count += bin.count;
  }
  // The parent term of the gain is the same for every cut, so cuts are ranked
  // by the children's score alone and the gain is formed for the winner.
  const double parent = total_grad * total_grad / (total_hess + l2);
  std::optional<SplitCandidate> best;
  double best_score = parent;
  double left_grad = 0.0;
  double left_hess = 0.0;
  size_t left_count = 0;
  for (size_t b = 0; b + 1 < bins.size(); ++b) {
    // An empty bin repeats the previous prefix, which already won ties.
    if (bins[b].count == 0) continue;
    left_grad += bins[b].grad_sum;
    left_hess += bins[b].hess_sum;
    left_count += bins[b].count;
    const size_t right_count = total_count - left_count;
    if (left_count < min_child_samples) continue;
    if (right_count < min_child_samples) break;
    const double right_grad = total_grad - left_grad;
    const double right_hess = total_hess - left_hess;
    const double score = left_grad * left_grad / (left_hess + l2) +
                         right_grad * right_grad / (right_hess + l2);
    if (score > best_score) {
      best_score = score;
      best = SplitCandidate{feature,    b,          false,       0.0,
                            left_grad,  left_hess,  left_count,  right_grad,
                            right_hess, right_count};
    }
  }
  if (best) {
    best->gain = SplitGain(best->left_grad, best->left_hess, best->right_grad,
                           best->right_hess, l2);
    if (!(best->gain > 0.0)) best.reset();
  }
  return best;
}

std::optional<SplitCandidate> FindBestCategoricalSplit(
    std::span<const HistogramBin> levels, double l2, size_t min_child_samples,
    size_t feature) {
  min_child_samples = std::max<size_t>(min_child_samples, 1);
  double total_grad = 0.0;
  double total_hess = 0.0;
  size_t total_count = 0;
  for (const auto& level : levels) {
    total_grad += level.grad_sum;
    total_hess += level.hess_sum;
    total_count += level.count;
  }
  std::optional<SplitCandidate> best;
  for (size_t b = 0; b < levels.size(); ++b) {
    const HistogramBin& level = levels[b];
    const size_t right_count = total_count - level.count;
    if (level.count < min_child_samples || right_count < min_child_samples) {
      continue;
    }
    const double right_grad = total_grad - level.grad_sum;
    const double right_hess = total_hess - level.hess_sum;
    const double gain =
        SplitGain(level.grad_sum, level.hess_sum, right_grad, right_hess, l2);
    if (gain > 0.0 && (!best || gain > best->gain)) {
      best = SplitCandidate{feature,        b,          true,
                            gain,           level.grad_sum,
                            level.hess_sum, level.count, right_grad,
                            right_hess,     right_count};
    }
  }
  return best;
}

namespace {

struct GradHess {
  double grad = 0.0;
  double hess = 0.0;
};

struct NodeStats {
  double grad = 0.0;
  double hess = 0.0;
  double grad_sq = 0.0;
  size_t count = 0;
};

class TreeGrower {
 public:
  TreeGrower(const BinnedMatrix& data, std::span<const double> gradients,
             std::span<const double> hessians, std::span<const size_t> rows,
             std::span<const double> weights, const GrowthStrategy& strategy)
      : data_(data), strategy_(strategy) {
    if (rows.empty()) throw DataError("cannot grow a tree on zero rows");
    if (gradients.size() != data.num_rows || hessians.size() != data.num_rows) {
      throw std::invalid_argument(
          "gradient and hessian lengths must equal the row count");
    }
    if (!weights.empty() && weights.size() != rows.size()) {
      throw std::invalid_argument("weights must be parallel to rows");
    }
    if (const auto* leaf_wise = std::get_if<LeafWise>(&strategy)) {
      l2_ = 0.0;
      min_child_ = leaf_wise->min_child_samples;
    } else {
      l2_ = std::get<LevelWise>(strategy).l2_leaf_reg;
      min_child_ = 1;
    }
    weighted_.assign(data.num_rows, GradHess{});
    root_rows_.reserve(rows.size());
    for (size_t k = 0; k < rows.size(); ++k) {
      const size_t row = rows[k];
      const double w = weights.empty() ? 1.0 : weights[k];
      weighted_[row] = {w * gradients[row], w * hessians[row]};
      root_rows_.push_back(static_cast<uint32_t>(row));
    }
    // Root rows of every feature, stably ordered by bin code.
    const size_t num_features = data.bins.size();
    sorted_.resize(num_features);
    std::vector<size_t> starts;
    for (size_t f = 0; f < num_features; ++f) {
      const auto& codes = data.codes[f];
      starts.assign(data.bins[f].num_bins() + 1, 0);
      for (uint32_t row : root_rows_) ++starts[codes[row] + 1];
      for (size_t c = 1; c < starts.size(); ++c) starts[c] += starts[c - 1];
      sorted_[f].resize(root_rows_.size());
      for (uint32_t row : root_rows_) sorted_[f][starts[codes[row]]++] = row;
    }
    goes_left_.assign(data.num_rows, 0);
  }

  Tree Grow() {
    Pending root = MakePending(std::move(root_rows_), 0, 0);
    if (std::holds_alternative<LeafWise>(strategy_)) {
      GrowLeafWise(std::move(root));
    } else {
      GrowLevelWise(std::move(root));
    }
    return ToPreOrder();
  }

 private:
  struct Pending {
    size_t node = 0;
    std::vector<uint32_t> rows;
    size_t depth = 0;
    // Range of this node's rows inside every sorted_ array.
    size_t begin = 0;
    size_t end = 0;
    NodeStats stats;
    std::optional<SplitCandidate> best;
  };

  Pending MakePending(std::vector<uint32_t> rows, size_t depth, size_t begin) {
    Pending pending;
    pending.rows = std::move(rows);
    pending.depth = depth;
    pending.begin = begin;
    pending.end = begin + pending.rows.size();
    for (uint32_t row : pending.rows) {
      const double g = weighted_[row].grad;
      pending.stats.grad += g;
      pending.stats.hess += weighted_[row].hess;
      pending.stats.grad_sq += g * g;
    }
    pending.stats.count = pending.rows.size();
    pending.node = nodes_.size();
    TreeNode node;
    node.value = -pending.stats.grad / (pending.stats.hess + l2_);
    node.cover = static_cast<double>(pending.stats.count);
    nodes_.push_back(node);
    return pending;
  }

  // Best split of the node on feature f. The sorted segment is walked one
  // occupied bin at a time; rows within a bin are summed in node row order.
  std::optional<SplitCandidate> SearchFeature(size_t f, const Pending& node) {
    const FeatureBins& bins = data_.bins[f];
    if (bins.num_bins() < 2) return std::nullopt;
    const uint16_t* codes = data_.codes[f].data();
    const uint32_t* order = sorted_[f].data();
    // Segments are ordered by code, so equal ends mean a constant feature.
    if (codes[order[node.begin]] == codes[order[node.end - 1]]) {
      return std::nullopt;
    }
    if (bins.categorical) {
      compact_.clear();
      touched_.clear();
      for (size_t k = node.begin; k < node.end;) {
        const uint16_t code = codes[order[k]];
        HistogramBin bin;
        do {
          const uint32_t row = order[k];
          bin.grad_sum += weighted_[row].grad;
          bin.hess_sum += weighted_[row].hess;
          ++bin.count;
          ++k;
        } while (k < node.end && codes[order[k]] == code);
        compact_.push_back(bin);
        touched_.push_back(code);
      }
      auto best = FindBestCategoricalSplit(compact_, l2_, min_child_, f);
      if (best) best->bin = touched_[best->bin];
      return best;
    }

    // Same cut rule as FindBestSplit, fused with the histogram pass.
    const NodeStats& total = node.stats;
    const double parent = total.grad * total.grad / (total.hess + l2_);
    double best_score = parent;
    std::optional<SplitCandidate> best;
    double left_grad = 0.0;
    double left_hess = 0.0;
    size_t left_count = 0;
    for (size_t k = node.begin; k < node.end;) {
      const uint16_t code = codes[order[k]];
      double bin_grad = 0.0;
      double bin_hess = 0.0;
      size_t bin_count = 0;
      do {
        const uint32_t row = order[k];
        bin_grad += weighted_[row].grad;
        bin_hess += weighted_[row].hess;
        ++bin_count;
        ++k;
      } while (k < node.end && codes[order[k]] == code);
      if (k == node.end) break;
      left_grad += bin_grad;
      left_hess += bin_hess;
      left_count += bin_count;
      const size_t right_count = total.count - left_count;
      if (left_count < min_child_) continue;
      if (right_count < min_child_) break;
      const double right_grad = total.grad - left_grad;
      const double right_hess = total.hess - left_hess;
      const double score = left_grad * left_grad / (left_hess + l2_) +
                           right_grad * right_grad / (right_hess + l2_);
      if (score > best_score) {
        best_score = score;
        best = SplitCandidate{f,          code,       false,      0.0,
                              left_grad,  left_hess,  left_count, right_grad,
                              right_hess, right_count};
      }
    }
    if (best) {
      best->gain = SplitGain(best->left_grad, best->left_hess,
                             best->right_grad, best->right_hess, l2_);
      if (!(best->gain > 0.0)) best.reset();
    }
    return best;
  }

  void FindSplit(Pending& pending) {
    pending.best.reset();
    if (pending.stats.count < 2 * min_child_) return;
    for (size_t f = 0; f < data_.bins.size(); ++f) {
      auto candidate = SearchFeature(f, pending);
      if (candidate && (!pending.best || candidate->gain > pending.best->gain)) {
        pending.best = candidate;
      }
    }
    if (pending.best &&
        !(pending.best->gain > kRelativeGainFloor * pending.stats.grad_sq)) {
      pending.best.reset();
    }
  }

  // `children_searched` is false when neither child can be split later; the
  // sorted segments are then left unpartitioned since nothing reads them.
  std::pair<Pending, Pending> ApplySplit(Pending& parent,
                                         bool children_searched) {
    const SplitCandidate& split = *parent.best;
    const uint16_t* codes = data_.codes[split.feature].data();
    std::vector<uint32_t> left_rows;
    std::vector<uint32_t> right_rows;
    left_rows.reserve(split.left_count);
    right_rows.reserve(split.right_count);
    for (uint32_t row : parent.rows) {
      const bool left =
          split.categorical ? codes[row] == split.bin : codes[row] <= split.bin;
      goes_left_[row] = left;
      (left ? left_rows : right_rows).push_back(row);
    }
    parent.rows.clear();
    parent.rows.shrink_to_fit();
    // Stable partition of every sorted segment: left rows first. A feature
    // constant in the parent stays constant below it and is never searched
    // again, so its segment is left as is.
    scratch_.resize(parent.end - parent.begin);
    for (size_t f = 0; children_searched && f < sorted_.size(); ++f) {
      uint32_t* sorted = sorted_[f].data();
      const uint16_t* feature_codes = data_.codes[f].data();
      if (feature_codes[sorted[parent.begin]] ==
          feature_codes[sorted[parent.end - 1]]) {
        continue;
      }
      size_t out = parent.begin;
      size_t spill = 0;
      for (size_t k = parent.begin; k < parent.end; ++k) {
        const uint32_t row = sorted[k];
        const size_t left = goes_left_[row];
        sorted[out] = row;
        scratch_[spill] = row;
        out += left;
        spill += 1 - left;
      }
      std::copy(scratch_.begin(), scratch_.begin() + spill, sorted + out);
    }
    const size_t middle = parent.begin + left_rows.size();

    TreeNode& node = nodes_[parent.node];
    node.feature = static_cast<int32_t>(split.feature);
    node.categorical = split.categorical;
    node.gain = split.gain;
    if (split.categorical) {
      node.left_levels = {static_cast<int32_t>(split.bin)};
    } else {
      node.threshold = data_.bins[split.feature].upper_edges[split.bin];
    }
    Pending left =
        MakePending(std::move(left_rows), parent.depth + 1, parent.begin);
    Pending right = MakePending(std::move(right_rows), parent.depth + 1, middle);
    nodes_[parent.node].left = static_cast<int32_t>(left.node);
    nodes_[parent.node].right = static_cast<int32_t>(right.node);
    return {std::move(left), std::move(right)};
  }

  void GrowLeafWise(Pending root) {
    const auto& params = std::get<LeafWise>(strategy_);
    auto can_split = [&](const Pending& p) { return p.depth < params.max_depth; };
    std::vector<Pending> frontier;
    if (can_split(root)) FindSplit(root);
    frontier.push_back(std::move(root));
    size_t num_leaves = 1;
    while (num_leaves < params.num_leaves) {
      size_t chosen = frontier.size();
      for (size_t i = 0; i < frontier.size(); ++i) {
        if (!frontier[i].best) continue;
        if (chosen == frontier.size() ||
            frontier[i].best->gain > frontier[chosen].best->gain) {
          chosen = i;
        }
      }
      if (chosen == frontier.size()) break;
      Pending parent = std::move(frontier[chosen]);
      frontier.erase(frontier.begin() + static_cast<ptrdiff_t>(chosen));
      const bool last = num_leaves + 1 == params.num_leaves;
      const SplitCandidate& split = *parent.best;
      auto [left, right] = ApplySplit(
          parent, !last && parent.depth + 1 < params.max_depth &&
                      (split.left_count >= 2 * min_child_ ||
                       split.right_count >= 2 * min_child_));
      if (last) break;
      if (can_split(left)) FindSplit(left);
      if (can_split(right)) FindSplit(right);
      frontier.push_back(std::move(left));
      frontier.push_back(std::move(right));
      ++num_leaves;
    }
  }

  void GrowLevelWise(Pending root) {
    const auto& params = std::get<LevelWise>(strategy_);
    std::vector<Pending> level;
    level.push_back(std::move(root));
    for (size_t depth = 0; depth < params.depth && !level.empty(); ++depth) {
      std::vector<Pending> next;
      for (auto& pending : level) {
        FindSplit(pending);
        if (!pending.best) continue;
        const SplitCandidate& split = *pending.best;
        auto [left, right] = ApplySplit(
            pending, depth + 1 < params.depth &&
                         (split.left_count >= 2 * min_child_ ||
                          split.right_count >= 2 * min_child_));
        next.push_back(std::move(left));
        next.push_back(std::move(right));
      }
      level = std::move(next);
    }
  }

  Tree ToPreOrder() const {
    Tree tree;
    tree.nodes.reserve(nodes_.size());
    std::vector<std::pair<size_t, int32_t>> stack;  // (old index, new parent)
    std::vector<bool> is_left;
    stack.emplace_back(0, -1);
    is_left.push_back(false);
    while (!stack.empty()) {
      const auto [old_index, parent] = stack.back();
      const bool left_child = is_left.back();
      stack.pop_back();
      is_left.pop_back();
      const auto new_index = static_cast<int32_t>(tree.nodes.size());
      tree.nodes.push_back(nodes_[old_index]);
      if (parent >= 0) {
        auto& p = tree.nodes[static_cast<size_t>(parent)];
        (left_child ? p.left : p.right) = new_index;
      }
      const TreeNode& node = nodes_[old_index];
      if (!node.is_leaf()) {
        stack.emplace_back(static_cast<size_t>(node.right), new_index);
        is_left.push_back(false);
        stack.emplace_back(static_cast<size_t>(node.left), new_index);
        is_left.push_back(true);
      }
    }
    return tree;
  }

  const BinnedMatrix& data_;
  const GrowthStrategy& strategy_;
  double l2_ = 0.0;
  size_t min_child_ = 1;
  std::vector<GradHess> weighted_;
  std::vector<uint32_t> root_rows_;
  // Per feature, the rows grouped by node and ordered by bin code within each
  // node's [begin, end) range.
  std::vector<std::vector<uint32_t>> sorted_;
  std::vector<uint8_t> goes_left_;
  std::vector<uint32_t> scratch_;
  // Occupied bins of the feature being searched and their codes.
  std::vector<HistogramBin> compact_;
  std::vector<uint16_t> touched_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

Tree GrowTree(const BinnedMatrix& data, std::span<const double> gradients,
              std::span<const double> hessians, std::span<const size_t> rows,
              std::span<const double> weights, const GrowthStrategy& strategy) {
  ValidateStrategy(strategy);
  TreeGrower grower(data, gradients, hessians, rows, weights, strategy);
  return grower.Grow();
}

}  // namespace amescause
