// Copyright 2026 The fairdiff Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Top-k utility metrics and group fairness metrics.
//
//   R@k  recall with denominator min(k, #test positives)
//   N@k  binary-relevance NDCG
//   A@k  |MAE_A - MAE_B| over held-out test ratings
//   E@k  sqrt(|e_A - e_B|), e_g the group-pooled share of top-k items that
//        are not test positives
//   dist_gap  two-sample Kolmogorov-Smirnov statistic between the groups'
//             pooled predicted ratings

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairdiff/common.h"
#include "fairdiff/data.h"

namespace fairdiff::eval {

struct RankedLists {
  int k = 0;
  // Per user (matrix column): item rows in rank order.
  std::vector<std::vector<int>> lists;
  // Users whose candidate set was smaller than k.
  int truncated = 0;
};

// Descending score over items with train_mask == 0; ties go to the lower item
// index.
RankedLists RankTopK(const Matrix& predictions, const MaskMatrix& train_mask, int k);

// users: restrict the average to these columns (all columns when empty).
// Only users with at least one test positive count. Throws when none do.
double RecallAtK(const RankedLists& lists, const MaskMatrix& test_mask,
                 const std::vector<int>& users = {});
double NdcgAtK(const RankedLists& lists, const MaskMatrix& test_mask,
               const std::vector<int>& users = {});

struct GroupGap {
  double a = 0.0;
  double b = 0.0;
  double value = 0.0;
};

// MAE of predicted vs true ratings over each group's test cells. Both
// matrices must be on the same (usually the raw rating) scale.
double GroupMae(const Matrix& predictions, const Matrix& truth, const MaskMatrix& test_mask,
                const std::vector<int>& users);
GroupGap AbsEquality(const Matrix& predictions, const Matrix& truth, const MaskMatrix& test_mask,
                     const data::GroupAssignment& groups);

GroupGap EqualOpportunity(const RankedLists& lists, const MaskMatrix& test_mask,
                          const data::GroupAssignment& groups);

// Exact KS statistic between all predicted cells of A's and B's columns.
double DistributionGap(const Matrix& predictions, const data::GroupAssignment& groups);
double KsStatistic(std::vector<double> x, std::vector<double> y);

struct GroupMetrics {
  int users = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  double mae = 0.0;
  double mae_normalized = 0.0;
  double incorrect_rate = 0.0;
};

struct MetricsReport {
  int k = 0;
  std::string attribute;
  double recall = 0.0;
  double ndcg = 0.0;
  double a_at_k = 0.0;             // rating scale
  double a_at_k_normalized = 0.0;  // [-1, 1] scale
  double e_at_k = 0.0;
  double dist_gap = 0.0;
  GroupMetrics group_a;
  GroupMetrics group_b;
  // Run metadata.
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string label;
};

// predictions are on the normalized scale (as produced by the models).
MetricsReport Evaluate(const Matrix& predictions, const data::InteractionMatrix& matrix,
                       const data::DatasetSplit& split, const data::GroupAssignment& groups,
                       int k);

nlohmann::json ToJson(const MetricsReport& report);
MetricsReport FromJson(const nlohmann::json& j);
// Aligned plain-text table; one row per report.
std::string ToTable(const std::vector<MetricsReport>& reports);

}  // namespace fairdiff::eval
