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

// Run configuration: a flat "key = value" text file. Lines starting with '#'
// are comments. Unknown keys and out-of-range values are rejected before any
// work starts. Later sources override earlier ones (file, then CLI).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fairdiff/baseline.h"
#include "fairdiff/data.h"
#include "fairdiff/diffusion.h"
#include "fairdiff/groups.h"
#include "fairdiff/model.h"
#include "fairdiff/synthetic.h"

namespace fairdiff::config {

struct RunConfig {
  // dataset
  data::DatasetKind dataset = data::DatasetKind::kSynthetic;
  std::string ratings_path;       // movielens ratings.dat
  std::string users_path;         // movielens users.dat
  std::string user_artists_path;  // lastfm user_artists.dat
  std::string tags_path;          // lastfm user_taggedartists.dat (optional)
  int max_users = 0;              // 0 keeps every user
  int max_items = 0;              // 0 keeps every item
  data::SyntheticConfig synthetic;

  data::Attribute attribute = data::Attribute::kPlanted;
  data::GroupThresholds thresholds;
  groups::GroupVectorMethod group_method = groups::GroupVectorMethod::kMeanPool;

  // split
  data::SplitRatios split;
  int min_train = 10;

  // diffusion and model
  int steps = 100;
  double scale = 1e-4;
  double beta_min = 1e-5;
  int time_dim = 64;
  std::vector<int> mlp1 = {512, 256};
  std::vector<int> mlp2 = {256, 256};
  std::vector<int> mlp3 = {512};
  int tokens = 4;
  int token_dim = 64;
  model::Variant variant = model::Variant::kFull;

  // training
  int batch_size = 64;
  int epochs = 10;
  double lr = 1e-3;

  // prediction and evaluation
  int t_start = 0;  // 0 means T
  int ensemble = 1;
  int threads = 1;
  int k = 0;  // 0 picks the dataset default

  baseline::MfConfig mf;

  // sweep / sparsity
  std::string sweep_param = "T";
  std::vector<double> sweep_values = {10, 50, 100};
  std::vector<double> sparsity_ratios = {0.5, 0.7, 0.9};

  std::uint64_t seed = 1;
  std::string out_dir = "run";
};

// Key/value pairs in file order, for error messages and hashing.
using Entries = std::vector<std::pair<std::string, std::string>>;

Entries ParseText(const std::string& text, const std::string& source);
Entries ParseFile(const std::filesystem::path& path);

// Applies entries on top of `config`. Throws ConfigError on an unknown key or
// a malformed value. Call Validate afterwards.
void Apply(RunConfig& config, const Entries& entries);
// "key=value" strings from the command line.
Entries ParseOverrides(const std::vector<std::string>& overrides);

void Validate(const RunConfig& config);

// All keys in canonical order with their effective values.
Entries Canonical(const RunConfig& config);
std::string ToText(const RunConfig& config);
// Hash of the canonical text; out_dir and threads are excluded since they do
// not affect results.
std::string Hash(const RunConfig& config);

int EffectiveK(const RunConfig& config);
model::ModelConfig ToModelConfig(const RunConfig& config, int num_items);
diffusion::TrainConfig ToTrainConfig(const RunConfig& config);
diffusion::PredictOptions ToPredictOptions(const RunConfig& config);

}  // namespace fairdiff::config
