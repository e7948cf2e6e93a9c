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

#include "amescause/alignment.h"

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "amescause/errors.h"

namespace amescause {
namespace {

std::unordered_map<std::string, size_t> Positions(
    std::span<const std::string> list, const char* what) {
  std::unordered_map<std::string, size_t> positions;
  for (size_t i = 0; i < list.size(); ++i) {
    if (!positions.emplace(list[i], i).second) {
      throw std::invalid_argument(std::string(what) +
                                  " list repeats feature '" + list[i] + "'");
    }
  }
  return positions;
}

std::vector<std::string> TopK(const ImportanceRanking& ranking, size_t k) {
  std::vector<std::string> top;
  for (const auto& entry : ranking) {
    if (k == 0 ? !(entry.score > 0.0) : top.size() >= k) break;
    top.push_back(entry.feature);
  }
  return top;
}

}  // namespace

RankIntersection IntersectRanks(std::span<const std::string> causal,
                                std::span<const std::string> importance) {
  const auto causal_positions = Positions(causal, "causal");
  Positions(importance, "importance");
  RankIntersection result;
  std::vector<size_t> causal_positions_of_common;
  for (const auto& feature : importance) {
    const auto it = causal_positions.find(feature);
    if (it == causal_positions.end()) continue;
    result.common.push_back(feature);
    causal_positions_of_common.push_back(it->second);
  }
  if (result.common.empty()) {
    throw DataError("causal and importance lists share no feature");
  }
  const size_t n = result.common.size();
  // Common features arrive in importance order, so those ranks are 1..n.
  result.importance_ranks.resize(n);
  for (size_t i = 0; i < n; ++i) result.importance_ranks[i] = static_cast<int>(i + 1);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return causal_positions_of_common[a] < causal_positions_of_common[b];
  });
  result.causal_ranks.resize(n);
  for (size_t r = 0; r < n; ++r) {
    result.causal_ranks[order[r]] = static_cast<int>(r + 1);
  }
  return result;
}

double SpearmanRho(std::span<const int> causal_ranks,
                   std::span<const int> importance_ranks) {
  const size_t n = causal_ranks.size();
  if (importance_ranks.size() != n) {
    throw std::invalid_argument("rank vectors differ in length");
  }
  if (n < 2) throw std::invalid_argument("Spearman rho needs n >= 2");
  for (const auto ranks : {causal_ranks, importance_ranks}) {
    std::vector<bool> seen(n + 1, false);
    for (int r : ranks) {
      if (r < 1 || static_cast<size_t>(r) > n || seen[static_cast<size_t>(r)]) {
        throw std::invalid_argument("rank vector is not a permutation of 1..n");
      }
      seen[static_cast<size_t>(r)] = true;
    }
  }
  int64_t sum_sq = 0;
  for (size_t i = 0; i < n; ++i) {
    const int64_t d = causal_ranks[i] - importance_ranks[i];
    sum_sq += d * d;
  }
  const auto nn = static_cast<int64_t>(n);
  return 1.0 - static_cast<double>(6 * sum_sq) /
                   static_cast<double>(nn * (nn * nn - 1));
}

AlignmentResult AlignReport(const ImportanceRanking& ranking,
                            std::span<const std::string> causal,
                            const AlignOptions& options,
                            std::span<const ImportanceRanking> all_rankings) {
  if (options.top_k == 1) throw ConfigError("top-k must be 0 or >= 2");
  AlignmentResult result;
  result.causal.assign(causal.begin(), causal.end());
  if (options.union_mode && !all_rankings.empty()) {
    std::set<std::string> pool;
    for (const auto& other : all_rankings) {
      for (auto& feature : TopK(other, options.top_k)) pool.insert(feature);
    }
    for (const auto& entry : ranking) {
      if (pool.count(entry.feature)) result.importance.push_back(entry.feature);
    }
  } else {
    result.importance = TopK(ranking, options.top_k);
  }

  RankIntersection ranks = IntersectRanks(result.causal, result.importance);
  result.common = std::move(ranks.common);
  result.causal_ranks = std::move(ranks.causal_ranks);
  result.importance_ranks = std::move(ranks.importance_ranks);
  result.n = result.common.size();
  if (result.n < 2) {
    throw DataError("only " + std::to_string(result.n) +
                    " feature is both causally significant and important");
  }
  for (size_t i = 0; i < result.n; ++i) {
    result.differences.push_back(result.causal_ranks[i] -
                                 result.importance_ranks[i]);
  }
  result.rho = SpearmanRho(result.causal_ranks, result.importance_ranks);
  return result;
}

}  // namespace amescause
