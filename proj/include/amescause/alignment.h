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

// Rank agreement between SHAP importance and causal significance.
//
// Both lists are restricted to their common features and re-ranked to 1..n
// within that intersection, so rho is always a proper Spearman coefficient.

#ifndef AMESCAUSE_ALIGNMENT_H_
#define AMESCAUSE_ALIGNMENT_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "amescause/shap.h"

namespace amescause {

// Feature names, rank 1 first. Must be duplicate-free.
using RankedList = std::vector<std::string>;

struct RankIntersection {
  // Common features ordered by their position in the importance list.
  std::vector<std::string> common;
  std::vector<int> causal_ranks;
  std::vector<int> importance_ranks;
};

// Throws DataError when the lists share no feature and std::invalid_argument
// when either list has duplicates.
RankIntersection IntersectRanks(std::span<const std::string> causal,
                                std::span<const std::string> importance);

// 1 - 6 * sum(d^2) / (n (n^2 - 1)). Both vectors must be permutations of
// 1..n with n >= 2; throws std::invalid_argument otherwise.
double SpearmanRho(std::span<const int> causal_ranks,
                   std::span<const int> importance_ranks);

struct AlignmentResult {
  RankedList causal;
  RankedList importance;
  std::vector<std::string> common;
  std::vector<int> causal_ranks;
  std::vector<int> importance_ranks;
  std::vector<int> differences;
  size_t n = 0;
  double rho = 0.0;
};

struct AlignOptions {
  // Number of top SHAP features; 0 keeps every feature with nonzero score.
  size_t top_k = 0;
  // Use the union of the top features of all models as the importance pool.
  bool union_mode = false;
};

// The importance list is the top-k of `ranking`. In union mode the candidate
// pool is the union of the top-k features of `all_rankings`, ordered by this
// model's ranking.
AlignmentResult AlignReport(const ImportanceRanking& ranking,
                            std::span<const std::string> causal,
                            const AlignOptions& options,
                            std::span<const ImportanceRanking> all_rankings = {});

}  // namespace amescause

#endif  // AMESCAUSE_ALIGNMENT_H_
