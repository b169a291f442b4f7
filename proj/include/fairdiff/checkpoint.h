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

// Versioned checkpoint container and the prediction file format.
//
// Checkpoint layout:
//   fairdiff-checkpoint 1\n
//   schema <tag>\n
//   <key> <value>\n ...
//   end_header\n
//   u32 block count, then per block:
//     u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (row-major)
// All integers and floats little-endian.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fairdiff/baseline.h"
#include "fairdiff/common.h"
#include "fairdiff/data.h"
#include "fairdiff/groups.h"
#include "fairdiff/model.h"
#include "fairdiff/nn.h"

namespace fairdiff::checkpoint {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kModelSchema = "fairdiff-model";
inline constexpr const char* kMfSchema = "fairdiff-mf";

struct Container {
  std::string schema;
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Matrix>> blocks;

  const Matrix& Block(const std::string& name) const;
  const std::string& Get(const std::string& key) const;
};

std::string Serialize(const Container& c);
Container Parse(const std::string& bytes, const std::string& source = "checkpoint");
void Write(const std::filesystem::path& path, const Container& c);
Container Read(const std::filesystem::path& path);

struct ModelState {
  model::ModelConfig config;
  groups::GroupVectors group_vectors;
  std::string dataset_fingerprint;
  double variance_scale = 1e-4;
  double beta_min = 1e-5;
  int epochs_done = 0;
  std::vector<double> loss_history;
};

Container PackModel(model::NoisePredictor& model, const nn::Adam& optimizer,
                    const ModelState& state);
// Rebuilds the model from the header, then loads every block. The optimizer
// state is restored into `optimizer` when non-null.
model::NoisePredictor UnpackModel(const Container& c, ModelState& state,
                                  nn::Adam* optimizer = nullptr);

struct MfState {
  baseline::MfParams params;
  std::string dataset_fingerprint;
};

Container PackMf(const MfState& state);
MfState UnpackMf(const Container& c);

// Prediction file: text header
//   fairdiff-predictions 1\n m <m>\n n <n>\n normalization <scheme>\n
//   scale_lo <lo>\n scale_hi <hi>\n fingerprint <hex>\n end_header\n
// followed by m*n little-endian f64 values, row-major items x users, on the
// rating scale.
struct PredictionFile {
  Matrix ratings;  // denormalized
  data::Normalization normalization;
  std::string fingerprint;
};

std::string SerializePredictions(const PredictionFile& p);
PredictionFile ParsePredictions(const std::string& bytes, const std::string& source);

}  // namespace fairdiff::checkpoint
