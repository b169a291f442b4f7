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

// The conditional noise predictor
//
//   eps(x_t, t, y) = MLP3(Atten(Enc(y), z, z)),  z = MLP1([x_t; time(t)])
//
// where Enc = MLP2 encodes a counterfactual group vector y into the attention
// query and the user features z serve as key and value.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairdiff/common.h"
#include "fairdiff/nn.h"

namespace fairdiff::model {

enum class Variant {
  kFull,
  // Enc replaced by a frozen seeded random linear resize of y.
  kNoEncoder,
  // Attention and the condition path removed: eps = MLP3(MLP1([x_t; time])).
  kNoCounterfactual,
};

std::string ToString(Variant variant);
Variant ParseVariant(const std::string& name);

struct ModelConfig {
  int num_items = 0;
  int num_steps = 100;
  int time_dim = 64;
  // Hidden widths followed by the output width (the user feature width).
  std::vector<int> mlp1 = {512, 256};
  // Hidden widths followed by the output width (the query width).
  std::vector<int> mlp2 = {256, 256};
  // Hidden widths only; the output width is num_items.
  std::vector<int> mlp3 = {512};
  int tokens = 4;
  int token_dim = 64;
  Variant variant = Variant::kFull;
  std::uint64_t seed = 1;
};

// One-hot step indicator times a learned num_steps x time_dim table, i.e. a
// row lookup. Steps are 1-based.
struct TimeEmbedding {
  nn::Param table;

  Matrix Forward(const std::vector<int>& steps) const;
  void Backward(const std::vector<int>& steps, const Matrix& d_out);
};

class NoisePredictor {
 public:
  struct Cache {
    std::vector<int> steps;
    nn::Mlp::Cache mlp1;
    nn::Mlp::Cache encoder;
    nn::LinearCache fixed_encoder;
    nn::Attention::Cache attention;
    nn::Mlp::Cache mlp3;
  };

  struct InputGrads {
    Matrix d_x;
    Matrix d_y;
  };

  explicit NoisePredictor(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int num_items() const { return config_.num_items; }
  int num_steps() const { return config_.num_steps; }

  // x_t and y are m x batch; steps has one entry per column in [1, T].
  Matrix Forward(const Matrix& x_t, const std::vector<int>& steps, const Matrix& y,
                 Cache* cache = nullptr) const;
  // Accumulates gradients of every trainable block; returns input cotangents.
  InputGrads Backward(const Cache& cache, const Matrix& d_eps);

  // g_bar = Enc(g).
  Matrix EncodeCondition(const Matrix& g) const;
  // z' = Atten(Enc(y), z, z). Not available for kNoCounterfactual.
  Matrix CounterfactualMap(const Matrix& z, const Matrix& y) const;
  // z = MLP1([x_t; time(t)]).
  Matrix UserFeatures(const Matrix& x_t, const std::vector<int>& steps) const;

  // All blocks, frozen ones included, in a fixed order.
  nn::ParamList Params();
  nn::ParamList TrainableParams();
  Eigen::Index TrainableParamCount();
  void ZeroGrad();

  nn::Mlp& mlp1() { return mlp1_; }
  nn::Mlp& encoder() { return encoder_; }
  nn::Mlp& mlp3() { return mlp3_; }
  nn::Attention& attention() { return attention_; }
  TimeEmbedding& time() { return time_; }

 private:
  void CheckInputs(const Matrix& x_t, const std::vector<int>& steps, const Matrix& y) const;

  ModelConfig config_;
  TimeEmbedding time_;
  nn::Mlp mlp1_;
  nn::Mlp encoder_;               // kFull
  nn::LinearLayer fixed_encoder_;  // kNoEncoder, frozen
  nn::Attention attention_;
  nn::Mlp mlp3_;
};

// A fresh model of the requested ablation built from the same configuration
// and seed as `base`.
NoisePredictor AblationVariant(const ModelConfig& base, Variant kind);

}  // namespace fairdiff::model
