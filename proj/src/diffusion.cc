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

#include "fairdiff/diffusion.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace fairdiff::diffusion {
namespace {

double Sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void CheckStep(const NoiseSchedule& s, int t) {
  if (t < 1 || t > s.steps())
    throw Error("diffusion step " + std::to_string(t) + " outside [1, " +
                std::to_string(s.steps()) + "]");
}

// beta_t / sqrt(1 - abar_t), taken as 0 for the identity schedule.
double NoiseCoefficient(const NoiseSchedule& s, int t) {
  const double one_minus = 1.0 - s.alpha_bar(t);
  return one_minus > 0.0 ? s.beta(t) / std::sqrt(one_minus) : 0.0;
}

}  // namespace

NoiseSchedule ScheduleFromBetas(const Vector& betas) {
  if (betas.size() < 1) throw ConfigError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.betas = betas;
  const int steps = static_cast<int>(betas.size());
  s.alphas.resize(steps);
  s.alpha_bars.resize(steps);
  s.posterior_var.resize(steps);
  double abar = 1.0;
  for (int k = 0; k < steps; ++k) {
    const double beta = betas(k);
    if (!(beta >= 0.0 && beta < 1.0))
      throw ConfigError("noise schedule: beta_" + std::to_string(k + 1) + " = " +
                        std::to_string(beta) + " outside [0, 1)");
    const double prev = abar;
    s.alphas(k) = 1.0 - beta;
    abar *= s.alphas(k);
    s.alpha_bars(k) = abar;
    // (1 - alpha_t)(1 - abar_{t-1}) / (1 - abar_t), abar_0 = 1.
    s.posterior_var(k) = (1.0 - abar) > 0.0 ? beta * (1.0 - prev) / (1.0 - abar) : 0.0;
  }
  return s;
}

NoiseSchedule BuildSchedule(int steps, double scale, double beta_min) {
  if (steps < 1) throw ConfigError("diffusion steps T must be >= 1");
  if (!(scale > 0.0)) throw ConfigError("variance scale L must be > 0");
  if (!(beta_min >= 0.0)) throw ConfigError("beta_min must be >= 0");
  Vector betas(steps);
  for (int t = 1; t <= steps; ++t) {
    const double u = steps == 1 ? -6.0 : -6.0 + 12.0 * (t - 1) / (steps - 1);
    betas(t - 1) = Sigmoid(u) * scale + beta_min;
  }
  if (betas.maxCoeff() >= 1.0) throw ConfigError("noise schedule produces beta >= 1");
  return ScheduleFromBetas(betas);
}

Matrix QSample(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& schedule) {
  CheckStep(schedule, t);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols())
    throw ShapeError("q_sample: x0 and eps differ in shape");
  const double abar = schedule.alpha_bar(t);
  return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

Matrix ReverseStep(const Matrix& x_t, int t, const Matrix& eps_hat, const Matrix& z,
                   const NoiseSchedule& schedule) {
  CheckStep(schedule, t);
  if (x_t.rows() != eps_hat.rows() || x_t.cols() != eps_hat.cols())
    throw ShapeError("reverse_step: x_t and eps_hat differ in shape");
  Matrix mean = (x_t - NoiseCoefficient(schedule, t) * eps_hat) / std::sqrt(schedule.alpha(t));
  if (t > 1) {
    if (z.rows() != x_t.rows() || z.cols() != x_t.cols())
      throw ShapeError("reverse_step: z has wrong shape");
    mean += std::sqrt(schedule.sigma2(t)) * z;
  }
  return mean;
}

double BatchLossAndGrad(model::NoisePredictor& model, const Matrix& x0, const MaskMatrix& mask,
                        const Matrix& targets, const std::vector<int>& steps, const Matrix& noise,
                        const NoiseSchedule& schedule, bool compute_grad) {
  const Eigen::Index batch = x0.cols();
  Matrix x_t(x0.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    x_t.col(b) = QSample(x0.col(b), steps[b], noise.col(b), schedule);
  model::NoisePredictor::Cache cache;
  Matrix eps_hat = model.Forward(x_t, steps, targets, compute_grad ? &cache : nullptr);
  Matrix residual = (noise - eps_hat).cwiseProduct(mask.cast<double>());
  const double loss = residual.squaredNorm() / static_cast<double>(batch);
  if (compute_grad) {
    model.ZeroGrad();
    model.Backward(cache, (-2.0 / static_cast<double>(batch)) * residual);
  }
  return loss;
}

TrainResult Train(model::NoisePredictor& model, nn::Adam& optimizer, const Matrix& x0,
                  const MaskMatrix& mask, const Matrix& targets, const NoiseSchedule& schedule,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  const Eigen::Index m = x0.rows();
  const int n = static_cast<int>(x0.cols());
  if (mask.rows() != m || mask.cols() != n || targets.rows() != m || targets.cols() != n)
    throw ShapeError("train: x0, mask and targets must share shape");
  if (config.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (schedule.steps() != model.num_steps())
    throw ConfigError("train: schedule and model disagree on T");

  TrainResult result;
  for (int epoch = config.start_epoch; epoch < config.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(config.seed, "train-order", static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), order_rng.engine());

    const std::string stage = "train-noise/" + std::to_string(epoch);
    double total = 0.0;
    int batch_index = 0;
    for (int start = 0; start < n; start += config.batch_size, ++batch_index) {
      const int size = std::min(config.batch_size, n - start);
      Matrix bx(m, size), by(m, size), noise(m, size);
      MaskMatrix bm(m, size);
      std::vector<int> steps(size);
      for (int b = 0; b < size; ++b) {
        const int j = order[start + b];
        bx.col(b) = x0.col(j);
        by.col(b) = targets.col(j);
        bm.col(b) = mask.col(j);
        Rng rng(config.seed, stage, static_cast<std::uint64_t>(j));
        steps[b] = static_cast<int>(rng.UniformInt(1, schedule.steps()));
        rng.FillNormal(noise.col(b));
      }
      const bool any_observed = (bm.array() != 0).any();
      const double loss =
          BatchLossAndGrad(model, bx, bm, by, steps, noise, schedule, any_observed);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_index
            << "; parameter norms:";
        for (nn::Param* p : model.Params()) msg << " " << p->name << "=" << p->value.norm();
        throw NumericError(msg.str());
      }
      // A fully masked batch carries no signal; leave the parameters alone.
      if (any_observed) optimizer.Step(model.TrainableParams());
      total += loss * size;
    }
    const double epoch_loss = total / n;
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

Matrix ReconstructBatch(const model::NoisePredictor& model, const Matrix& x0_obs, const Matrix& y,
                        const NoiseSchedule& schedule, std::vector<Rng>& rngs, int t_start) {
  CheckStep(schedule, t_start);
  const Eigen::Index m = x0_obs.rows();
  const Eigen::Index batch = x0_obs.cols();
  if (static_cast<Eigen::Index>(rngs.size()) != batch)
    throw ShapeError("reconstruct: one random stream per column required");
  Matrix eps(m, batch);
  for (Eigen::Index b = 0; b < batch; ++b) rngs[b].FillNormal(eps.col(b));
  Matrix x = QSample(x0_obs, t_start, eps, schedule);
  Matrix z = Matrix::Zero(m, batch);
  for (int t = t_start; t >= 1; --t) {
    std::vector<int> steps(batch, t);
    Matrix eps_hat = model.Forward(x, steps, y);
    if (t > 1)
      for (Eigen::Index b = 0; b < batch; ++b) rngs[b].FillNormal(z.col(b));
    x = ReverseStep(x, t, eps_hat, z, schedule);
    if (!x.allFinite())
      throw NumericError("reconstruction became non-finite at step " + std::to_string(t));
  }
  return x;
}

Vector PredictUser(const model::NoisePredictor& model, const Vector& x0_obs, const Vector& y,
                   const NoiseSchedule& schedule, Rng& rng, int t_start,
                   const data::Normalization& scale) {
  std::vector<Rng> rngs{rng};
  Matrix out = ReconstructBatch(model, x0_obs, y, schedule, rngs, t_start);
  rng = rngs.front();
  return out.col(0).unaryExpr([&](double v) { return scale.Denormalize(v); });
}

Rng PredictionStream(std::uint64_t seed, int sample, int user) {
  return Rng(seed, "predict/" + std::to_string(sample), static_cast<std::uint64_t>(user));
}

Vector PredictEnsemble(const model::NoisePredictor& model, const Vector& x0_obs, const Vector& y,
                       const NoiseSchedule& schedule, int n_samples, std::uint64_t seed, int user,
                       int t_start) {
  if (n_samples < 1) throw ConfigError("ensemble size must be >= 1");
  Vector sum = Vector::Zero(x0_obs.size());
  for (int s = 0; s < n_samples; ++s) {
    std::vector<Rng> rngs{PredictionStream(seed, s, user)};
    sum += ReconstructBatch(model, x0_obs, y, schedule, rngs, t_start).col(0);
  }
  return sum / static_cast<double>(n_samples);
}

Matrix PredictAll(const model::NoisePredictor& model, const Matrix& x0_obs, const Matrix& targets,
                  const NoiseSchedule& schedule, const PredictOptions& options) {
  if (options.n_samples < 1) throw ConfigError("ensemble size must be >= 1");
  if (options.chunk < 1) throw ConfigError("prediction chunk must be >= 1");
  const int t_start = options.t_start == 0 ? schedule.steps() : options.t_start;
  CheckStep(schedule, t_start);
  const Eigen::Index m = x0_obs.rows();
  const int n = static_cast<int>(x0_obs.cols());
  Matrix out = Matrix::Zero(m, n);
  const int chunks = (n + options.chunk - 1) / options.chunk;

  auto run_chunk = [&](int c) {
    const int start = c * options.chunk;
    const int size = std::min(options.chunk, n - start);
    Matrix sum = Matrix::Zero(m, size);
    for (int s = 0; s < options.n_samples; ++s) {
      std::vector<Rng> rngs;
      rngs.reserve(size);
      for (int b = 0; b < size; ++b) rngs.push_back(PredictionStream(options.seed, s, start + b));
      sum += ReconstructBatch(model, x0_obs.middleCols(start, size),
                              targets.middleCols(start, size), schedule, rngs, t_start);
    }
    out.middleCols(start, size) = sum / static_cast<double>(options.n_samples);
  };

  const int threads = std::clamp(options.threads, 1, std::max(chunks, 1));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) run_chunk(c);
    return out;
  }
  // Chunks write disjoint column ranges; the assignment of chunks to threads
  // does not affect any value.
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&, w]() {
        try {
          for (int c = w; c < chunks; c += threads) run_chunk(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace fairdiff::diffusion
