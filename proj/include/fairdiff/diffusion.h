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

// Gaussian diffusion over user rating vectors: the noise schedule, closed-form
// forward noising, the ancestral reverse step, masked noise-matching training
// and per-user reconstruction.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fairdiff/common.h"
#include "fairdiff/data.h"
#include "fairdiff/model.h"
#include "fairdiff/nn.h"

namespace fairdiff::diffusion {

// All arrays are indexed by step t in [1, T] through the accessors.
struct NoiseSchedule {
  Vector betas;
  Vector alphas;
  Vector alpha_bars;
  Vector posterior_var;

  int steps() const { return static_cast<int>(betas.size()); }
  double beta(int t) const { return betas(t - 1); }
  double alpha(int t) const { return alphas(t - 1); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars(t - 1); }
  double sigma2(int t) const { return posterior_var(t - 1); }
};

// beta_t = sigmoid(u_t) * scale + beta_min, u_t evenly spaced over [-6, 6]
// for t = 1..T (u_1 = -6 when T = 1).
NoiseSchedule BuildSchedule(int steps, double scale, double beta_min);
// Derived arrays for an explicit beta sequence; 0 <= beta < 1.
NoiseSchedule ScheduleFromBetas(const Vector& betas);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Matrix QSample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& schedule);

// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sigma_t z,
// with the noise term dropped at t = 1.
Matrix ReverseStep(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z,
                   const NoiseSchedule& schedule);

struct TrainConfig {
  int batch_size = 64;
  int epochs = 10;
  std::uint64_t seed = 1;
  // Epochs already completed (resume); epoch streams are keyed by index.
  int start_epoch = 0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
};

// Called after each epoch with (epoch index, mean loss). Used for
// checkpointing; may throw to abort.
using EpochCallback = std::function<void(int, double)>;

// Masked noise-matching training. x0 is the train-masked normalized rating
// matrix (m x n), mask the train mask, targets the counterfactual group
// vectors G. Each batch minimizes mean_b ||m_b ⊙ (eps_b - eps_theta)||^2.
TrainResult Train(model::NoisePredictor& model, nn::Adam& optimizer, const Matrix& x0,
                  const MaskMatrix& mask, const Matrix& targets, const NoiseSchedule& schedule,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// The loss of one batch and its gradient wrt every trainable block (grads are
// zeroed first). steps and noise fully determine the batch.
double BatchLossAndGrad(model::NoisePredictor& model, const Matrix& x0, const MaskMatrix& mask,
                        const Matrix& targets, const std::vector<int>& steps, const Matrix& noise,
                        const NoiseSchedule& schedule, bool compute_grad);

// Noises each column of x0_obs to t_start and denoises back to step 0 with
// the model. rngs supplies one stream per column: the forward noise is drawn
// first, then one z per reverse step t = t_start..2. Output is normalized.
Matrix ReconstructBatch(const model::NoisePredictor& model, const Matrix& x0_obs, const Matrix& y,
                        const NoiseSchedule& schedule, std::vector<Rng>& rngs, int t_start);

// Single-user reconstruction, denormalized with `scale`.
Vector PredictUser(const model::NoisePredictor& model, const Vector& x0_obs, const Vector& y,
                   const NoiseSchedule& schedule, Rng& rng, int t_start,
                   const data::Normalization& scale);

// Stream used for sample `sample` of user `user`.
Rng PredictionStream(std::uint64_t seed, int sample, int user);

// Mean of n_samples reconstructions of one user (normalized scale).
Vector PredictEnsemble(const model::NoisePredictor& model, const Vector& x0_obs, const Vector& y,
                       const NoiseSchedule& schedule, int n_samples, std::uint64_t seed, int user,
                       int t_start);

struct PredictOptions {
  int n_samples = 1;
  std::uint64_t seed = 1;
  int t_start = 0;  // 0 means T
  int threads = 1;
  // Users per forward batch. Fixed so results do not depend on `threads`.
  int chunk = 32;
};

// Ensemble-mean reconstruction of every column (normalized scale).
Matrix PredictAll(const model::NoisePredictor& model, const Matrix& x0_obs, const Matrix& targets,
                  const NoiseSchedule& schedule, const PredictOptions& options);

}  // namespace fairdiff::diffusion
