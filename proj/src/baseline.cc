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

#include "fairdiff/baseline.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairdiff/nn.h"

namespace fairdiff::baseline {

std::vector<Cell> CollectCells(const Matrix& ratings, const MaskMatrix& mask) {
  if (ratings.rows() != mask.rows() || ratings.cols() != mask.cols())
    throw ShapeError("collect cells: ratings and mask differ in shape");
  std::vector<Cell> cells;
  for (Eigen::Index j = 0; j < ratings.cols(); ++j)
    for (Eigen::Index i = 0; i < ratings.rows(); ++i)
      if (mask(i, j)) cells.push_back({static_cast<int>(i), static_cast<int>(j), ratings(i, j)});
  return cells;
}

double MfObjective(const MfParams& p, const std::vector<Cell>& cells) {
  double loss = 0.0;
  for (const Cell& c : cells) {
    const double err = c.value - p.items.row(c.item).dot(p.users.row(c.user));
    loss += err * err;
  }
  return loss + p.lambda * (p.users.squaredNorm() + p.items.squaredNorm());
}

void MfGradient(const MfParams& p, const std::vector<Cell>& batch, double reg_weight,
                Matrix& d_users, Matrix& d_items) {
  d_users = 2.0 * reg_weight * p.lambda * p.users;
  d_items = 2.0 * reg_weight * p.lambda * p.items;
  for (const Cell& c : batch) {
    const double err = c.value - p.items.row(c.item).dot(p.users.row(c.user));
    d_users.row(c.user) -= 2.0 * err * p.items.row(c.item);
    d_items.row(c.item) -= 2.0 * err * p.users.row(c.user);
  }
}

MfParams TrainMf(const std::vector<Cell>& cells, int num_items, int num_users,
                 const MfConfig& config, std::vector<double>* objective_history) {
  if (cells.empty()) throw Error("train_mf: no training cells");
  if (config.factors < 1) throw ConfigError("mf.factors must be >= 1");
  if (config.batch_size < 1) throw ConfigError("mf.batch_size must be >= 1");

  nn::Param users{"mf.users", Matrix::Zero(num_users, config.factors), {}, true};
  nn::Param items{"mf.items", Matrix::Zero(num_items, config.factors), {}, true};
  Rng init(config.seed, "mf-init");
  init.FillNormal(users.value);
  init.FillNormal(items.value);
  users.value *= config.init_scale;
  items.value *= config.init_scale;

  nn::Adam adam({config.lr, 0.9, 0.999, 1e-8});
  MfParams p{users.value, items.value, config.lambda};
  const double n_cells = static_cast<double>(cells.size());
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Cell> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(config.seed, "mf-order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(cells[order[k]]);
      p.users = users.value;
      p.items = items.value;
      MfGradient(p, batch, static_cast<double>(batch.size()) / n_cells, users.grad, items.grad);
      adam.Step({&users, &items});
    }
    p.users = users.value;
    p.items = items.value;
    const double objective = MfObjective(p, cells);
    if (!std::isfinite(objective))
      throw NumericError("train_mf: objective diverged at epoch " + std::to_string(epoch));
    if (objective_history) objective_history->push_back(objective);
  }
  return p;
}

Matrix PredictMf(const MfParams& params) { return params.items * params.users.transpose(); }

Matrix PredictMf(const MfParams& params, const data::Normalization& scale) {
  return PredictMf(params).unaryExpr([&](double v) { return scale.Denormalize(v); });
}

}  // namespace fairdiff::baseline
