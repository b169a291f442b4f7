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
// Planted-bias synthetic rating data: two user groups whose latent
// preferences are drawn around shifted centers, with preference-driven
// (missing-not-at-random) observation.

#pragma once

#include <cstdint>

#include "fairdiff/data.h"

namespace fairdiff::data {

struct SyntheticConfig {
  int users = 200;
  int items = 120;
  // Fraction of users in group A (the minority by default).
  double minority_fraction = 0.3;
  // Distance between the two groups' preference centers in latent space.
  double preference_shift = 1.5;
  int latent_dim = 4;
  int min_per_user = 20;
  int max_per_user = 40;
  double rating_noise = 0.3;
  // Sharpness of preference-driven observation; 0 gives uniform sampling.
  double selection_temperature = 1.5;
  std::uint64_t seed = 1;
};

// Produces a 1..5 star dataset with planted_group metadata on every user.
RatingDataset GeneratePlantedBias(const SyntheticConfig& config);

}  // namespace fairdiff::data
