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
#include "fairdiff/synthetic.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairdiff::data {

RatingDataset GeneratePlantedBias(const SyntheticConfig& c) {
  if (c.users < 2 || c.items < c.max_per_user || c.min_per_user < 1 ||
      c.max_per_user < c.min_per_user || c.latent_dim < 1)
    throw ConfigError("invalid synthetic dataset configuration");
  if (!(c.minority_fraction > 0.0 && c.minority_fraction < 1.0))
    throw ConfigError("synthetic.minority_fraction must be in (0, 1)");

  Rng rng(c.seed, "synthetic");
  const int k = c.latent_dim;
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(k));

  Matrix item_factors(k, c.items);
  rng.FillNormal(item_factors);
  item_factors *= inv_sqrt_k * 1.5;
  Vector item_bias(c.items);
  for (int i = 0; i < c.items; ++i) item_bias(i) = 0.4 * rng.Normal();

  Vector direction(k);
  rng.FillNormal(direction);
  direction.normalize();

  const int n_a = std::max(1, static_cast<int>(std::lround(c.minority_fraction * c.users)));
  RatingDataset ds;
  ds.kind = DatasetKind::kSynthetic;
  for (int u = 0; u < c.users; ++u) {
    const int group = u < n_a ? 0 : 1;
    // Centers at -shift/2 and +shift/2 along a shared direction.
    Vector pref = direction * (group == 0 ? -0.5 : 0.5) * c.preference_shift;
    for (int d = 0; d < k; ++d) pref(d) += 0.6 * rng.Normal();
    Vector affinity = item_factors.transpose() * pref + item_bias;

    // Gumbel top-k draws items without replacement with probability
    // proportional to exp(temperature * affinity).
    std::vector<std::pair<double, int>> keys(c.items);
    for (int i = 0; i < c.items; ++i) {
      double g = -std::log(-std::log(std::max(rng.Uniform(), 1e-300)));
      keys[i] = {c.selection_temperature * affinity(i) + g, i};
    }
    const int count = static_cast<int>(rng.UniformInt(c.min_per_user, c.max_per_user));
    std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });

    const std::string uid = std::to_string(u + 1);
    UserMeta meta;
    meta.planted_group = group;
    ds.users[uid] = meta;
    for (int r = 0; r < count; ++r) {
      int i = keys[r].second;
      double raw = 3.0 + 1.2 * affinity(i) + c.rating_noise * rng.Normal();
      double stars = std::clamp(std::round(raw), 1.0, 5.0);
      ds.events.push_back({uid, std::to_string(i + 1), stars, std::nullopt});
    }
  }
  Aggregate(ds);
  return ds;
}

}  // namespace fairdiff::data
