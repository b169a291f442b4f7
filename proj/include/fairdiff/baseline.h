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

// Regularized matrix factorization on explicit ratings:
//
//   min  sum_observed (r_ij - q_i . p_j)^2 + lambda (|P|^2 + |Q|^2)

#pragma once

#include <cstdint>
#include <vector>

#include "fairdiff/common.h"
#include "fairdiff/data.h"

namespace fairdiff::baseline {

struct MfConfig {
  int factors = 20;
  double lambda = 0.1;
  double lr = 1e-3;
  int batch_size = 64;
  int epochs = 100;
  double init_scale = 0.1;
  std::uint64_t seed = 1;
};

struct MfParams {
  Matrix users;  // n x f
  Matrix items;  // m x f
  double lambda = 0.1;
};

struct Cell {
  int item = 0;
  int user = 0;
  double value = 0.0;
};

// Observed training cells in column-major order.
std::vector<Cell> CollectCells(const Matrix& ratings, const MaskMatrix& mask);

double MfObjective(const MfParams& params, const std::vector<Cell>& cells);

// Gradient of  sum_batch (r - q.p)^2 + reg_weight * lambda (|P|^2 + |Q|^2).
// A mini-batch uses reg_weight = |batch| / |cells| so the batch objectives
// sum to the full objective over an epoch.
void MfGradient(const MfParams& params, const std::vector<Cell>& batch, double reg_weight,
                Matrix& d_users, Matrix& d_items);

// Mini-batch training with Adam. objective_history, when given, receives the
// full objective after every epoch. Throws NumericError on divergence.
MfParams TrainMf(const std::vector<Cell>& cells, int num_items, int num_users,
                 const MfConfig& config, std::vector<double>* objective_history = nullptr);

// Q P^T, items x users, normalized scale.
Matrix PredictMf(const MfParams& params);
Matrix PredictMf(const MfParams& params, const data::Normalization& scale);

}  // namespace fairdiff::baseline
