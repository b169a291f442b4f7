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

#include "fairdiff/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace fairdiff::eval {
namespace {

std::vector<int> AllColumns(int n) {
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

int CountPositives(const MaskMatrix& test, int j) {
  int c = 0;
  for (Eigen::Index i = 0; i < test.rows(); ++i) c += test(i, j) ? 1 : 0;
  return c;
}

template <typename PerUser>
double AverageOverEligible(const RankedLists& lists, const MaskMatrix& test,
                           const std::vector<int>& users, const char* name, PerUser per_user) {
  if (static_cast<Eigen::Index>(lists.lists.size()) != test.cols())
    throw ShapeError(std::string(name) + ": lists and test mask disagree on user count");
  const std::vector<int> cols = users.empty() ? AllColumns(static_cast<int>(test.cols())) : users;
  double sum = 0.0;
  int eligible = 0;
  for (int j : cols) {
    const int positives = CountPositives(test, j);
    if (positives == 0) continue;
    sum += per_user(lists.lists[j], j, positives);
    ++eligible;
  }
  if (eligible == 0) throw Error(std::string(name) + ": no user has a test positive");
  return sum / eligible;
}

}  // namespace

RankedLists RankTopK(const Matrix& predictions, const MaskMatrix& train_mask, int k) {
  if (k < 1) throw ConfigError("k must be >= 1");
  if (predictions.rows() != train_mask.rows() || predictions.cols() != train_mask.cols())
    throw ShapeError("rank_topk: predictions and train mask differ in shape");
  RankedLists out;
  out.k = k;
  out.lists.resize(predictions.cols());
  for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
    std::vector<int> candidates;
    for (Eigen::Index i = 0; i < predictions.rows(); ++i)
      if (!train_mask(i, j)) candidates.push_back(static_cast<int>(i));
    const int take = std::min<int>(k, static_cast<int>(candidates.size()));
    if (take < k) ++out.truncated;
    auto better = [&](int a, int b) {
      const double sa = predictions(a, j), sb = predictions(b, j);
      if (sa != sb) return sa > sb;
      return a < b;
    };
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(), better);
    candidates.resize(take);
    out.lists[j] = std::move(candidates);
  }
  return out;
}

double RecallAtK(const RankedLists& lists, const MaskMatrix& test_mask,
                 const std::vector<int>& users) {
  return AverageOverEligible(lists, test_mask, users, "recall@k",
                             [&](const std::vector<int>& list, int j, int positives) {
                               int hits = 0;
                               for (int i : list) hits += test_mask(i, j) ? 1 : 0;
                               return static_cast<double>(hits) / std::min(lists.k, positives);
                             });
}

double NdcgAtK(const RankedLists& lists, const MaskMatrix& test_mask,
               const std::vector<int>& users) {
  return AverageOverEligible(lists, test_mask, users, "ndcg@k",
                             [&](const std::vector<int>& list, int j, int positives) {
                               double dcg = 0.0;
                               for (std::size_t r = 0; r < list.size(); ++r)
                                 if (test_mask(list[r], j)) dcg += 1.0 / std::log2(r + 2.0);
                               double ideal = 0.0;
                               for (int r = 0; r < std::min(lists.k, positives); ++r)
                                 ideal += 1.0 / std::log2(r + 2.0);
                               return dcg / ideal;
                             });
}

double GroupMae(const Matrix& predictions, const Matrix& truth, const MaskMatrix& test_mask,
                const std::vector<int>& users) {
  double sum = 0.0;
  long count = 0;
  for (int j : users) {
    for (Eigen::Index i = 0; i < test_mask.rows(); ++i) {
      if (!test_mask(i, j)) continue;
      sum += std::abs(predictions(i, j) - truth(i, j));
      ++count;
    }
  }
  if (count == 0) throw Error("group has no test cells");
  return sum / static_cast<double>(count);
}

GroupGap AbsEquality(const Matrix& predictions, const Matrix& truth, const MaskMatrix& test_mask,
                     const data::GroupAssignment& groups) {
  if (predictions.rows() != truth.rows() || predictions.cols() != truth.cols() ||
      predictions.rows() != test_mask.rows() || predictions.cols() != test_mask.cols())
    throw ShapeError("abs_equality: shape mismatch");
  GroupGap g;
  g.a = GroupMae(predictions, truth, test_mask, groups.group_a);
  g.b = GroupMae(predictions, truth, test_mask, groups.group_b);
  g.value = std::abs(g.a - g.b);
  return g;
}

GroupGap EqualOpportunity(const RankedLists& lists, const MaskMatrix& test_mask,
                          const data::GroupAssignment& groups) {
  auto incorrect_rate = [&](const std::vector<int>& users, const char* name) {
    long total = 0, wrong = 0;
    for (int j : users) {
      for (int i : lists.lists.at(j)) {
        ++total;
        wrong += test_mask(i, j) ? 0 : 1;
      }
    }
    if (total == 0) throw Error(std::string("equal_opportunity: empty lists for group ") + name);
    return static_cast<double>(wrong) / static_cast<double>(total);
  };
  GroupGap g;
  g.a = incorrect_rate(groups.group_a, "A");
  g.b = incorrect_rate(groups.group_b, "B");
  g.value = std::sqrt(std::abs(g.a - g.b));
  return g;
}

double KsStatistic(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw Error("KS statistic needs two non-empty samples");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  // Advance past every copy of the smallest pending value before comparing
  // CDFs, so ties are handled exactly.
  while (i < x.size() || j < y.size()) {
    double v;
    if (j == y.size() || (i < x.size() && x[i] <= y[j])) {
      v = x[i];
    } else {
      v = y[j];
    }
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    best = std::max(best, std::abs(i / nx - j / ny));
  }
  return best;
}

double DistributionGap(const Matrix& predictions, const data::GroupAssignment& groups) {
  if (groups.group_a.empty() || groups.group_b.empty())
    throw Error("distribution_gap: both groups must be non-empty");
  auto pool = [&](const std::vector<int>& users) {
    std::vector<double> v;
    v.reserve(users.size() * predictions.rows());
    for (int j : users)
      for (Eigen::Index i = 0; i < predictions.rows(); ++i) v.push_back(predictions(i, j));
    return v;
  };
  return KsStatistic(pool(groups.group_a), pool(groups.group_b));
}

MetricsReport Evaluate(const Matrix& predictions, const data::InteractionMatrix& matrix,
                       const data::DatasetSplit& split, const data::GroupAssignment& groups,
                       int k) {
  if (predictions.rows() != matrix.num_items() || predictions.cols() != matrix.num_users())
    throw ShapeError("evaluate: prediction matrix does not match the dataset");
  if ((split.test.array() != 0).count() == 0) throw Error("evaluate: test split is empty");

  MetricsReport r;
  r.k = k;
  r.attribute = data::ToString(groups.attribute);
  RankedLists lists = RankTopK(predictions, split.train, k);
  r.recall = RecallAtK(lists, split.test);
  r.ndcg = NdcgAtK(lists, split.test);

  const auto& norm = matrix.normalization;
  Matrix pred_raw = predictions.unaryExpr([&](double v) { return norm.Denormalize(v); });
  Matrix truth_raw = matrix.ratings.unaryExpr([&](double v) { return norm.Denormalize(v); });
  GroupGap mae = AbsEquality(pred_raw, truth_raw, split.test, groups);
  GroupGap mae_norm = AbsEquality(predictions, matrix.ratings, split.test, groups);
  GroupGap eo = EqualOpportunity(lists, split.test, groups);
  r.a_at_k = mae.value;
  r.a_at_k_normalized = mae_norm.value;
  r.e_at_k = eo.value;
  r.dist_gap = DistributionGap(pred_raw, groups);

  auto fill = [&](GroupMetrics& gm, const std::vector<int>& users, double mae_raw, double mae_n,
                  double incorrect) {
    gm.users = static_cast<int>(users.size());
    gm.recall = RecallAtK(lists, split.test, users);
    gm.ndcg = NdcgAtK(lists, split.test, users);
    gm.mae = mae_raw;
    gm.mae_normalized = mae_n;
    gm.incorrect_rate = incorrect;
  };
  fill(r.group_a, groups.group_a, mae.a, mae_norm.a, eo.a);
  fill(r.group_b, groups.group_b, mae.b, mae_norm.b, eo.b);
  return r;
}

namespace {

nlohmann::json GroupJson(const GroupMetrics& g) {
  return {{"users", g.users},
          {"recall", g.recall},
          {"ndcg", g.ndcg},
          {"mae", g.mae},
          {"mae_normalized", g.mae_normalized},
          {"incorrect_rate", g.incorrect_rate}};
}

GroupMetrics GroupFromJson(const nlohmann::json& j) {
  GroupMetrics g;
  g.users = j.at("users").get<int>();
  g.recall = j.at("recall").get<double>();
  g.ndcg = j.at("ndcg").get<double>();
  g.mae = j.at("mae").get<double>();
  g.mae_normalized = j.at("mae_normalized").get<double>();
  g.incorrect_rate = j.at("incorrect_rate").get<double>();
  return g;
}

}  // namespace

nlohmann::json ToJson(const MetricsReport& r) {
  return {{"k", r.k},
          {"attribute", r.attribute},
          {"recall", r.recall},
          {"ndcg", r.ndcg},
          {"a_at_k", r.a_at_k},
          {"a_at_k_normalized", r.a_at_k_normalized},
          {"e_at_k", r.e_at_k},
          {"dist_gap", r.dist_gap},
          {"group_a", GroupJson(r.group_a)},
          {"group_b", GroupJson(r.group_b)},
          {"meta", {{"seed", r.seed}, {"config_hash", r.config_hash}, {"label", r.label}}}};
}

MetricsReport FromJson(const nlohmann::json& j) {
  MetricsReport r;
  r.k = j.at("k").get<int>();
  r.attribute = j.at("attribute").get<std::string>();
  r.recall = j.at("recall").get<double>();
  r.ndcg = j.at("ndcg").get<double>();
  r.a_at_k = j.at("a_at_k").get<double>();
  r.a_at_k_normalized = j.at("a_at_k_normalized").get<double>();
  r.e_at_k = j.at("e_at_k").get<double>();
  r.dist_gap = j.at("dist_gap").get<double>();
  r.group_a = GroupFromJson(j.at("group_a"));
  r.group_b = GroupFromJson(j.at("group_b"));
  const auto& meta = j.at("meta");
  r.seed = meta.at("seed").get<std::uint64_t>();
  r.config_hash = meta.at("config_hash").get<std::string>();
  r.label = meta.at("label").get<std::string>();
  return r;
}

std::string ToTable(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof(line), "%-22s %4s %8s %8s %8s %8s %8s %8s %8s %8s\n", "run", "k",
                "recall", "ndcg", "A@k", "A@k(n)", "E@k", "gap", "MAE_A", "MAE_B");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line),
                  "%-22s %4d %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  r.label.empty() ? "-" : r.label.c_str(), r.k, r.recall, r.ndcg, r.a_at_k,
                  r.a_at_k_normalized, r.e_at_k, r.dist_gap, r.group_a.mae, r.group_b.mae);
    out << line;
  }
  return out.str();
}

}  // namespace fairdiff::eval
