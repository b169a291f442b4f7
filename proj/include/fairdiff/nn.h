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
// A small dense neural-network kernel: linear layers, MLPs, token attention,
// reverse-mode gradients, Adam and a finite-difference gradient checker.
//
// Batches are matrices whose columns are samples. All arithmetic is double
// precision.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fairdiff/common.h"

namespace fairdiff::nn {

// A named, learnable block and its gradient accumulator.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void ZeroGrad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

using ParamList = std::vector<Param*>;

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), seeded by the block name.
void InitFanInUniform(Param& p, Eigen::Index fan_in, std::uint64_t seed);

enum class Activation { kIdentity, kSilu };

Matrix Activate(Activation act, const Matrix& pre);
// d activation / d pre, elementwise.
Matrix ActivateGrad(Activation act, const Matrix& pre);

struct LinearLayer {
  Param weight;  // out x in
  Param bias;    // out x 1

  LinearLayer() = default;
  LinearLayer(std::string name, Eigen::Index in, Eigen::Index out, std::uint64_t seed);
  Eigen::Index in_dim() const { return weight.value.cols(); }
  Eigen::Index out_dim() const { return weight.value.rows(); }
  ParamList Params() { return {&weight, &bias}; }
};

struct LinearCache {
  Matrix input;
};

struct LinearGrads {
  Matrix d_weight;
  Matrix d_bias;
  Matrix d_input;
};

// y = W x + b for every column of x.
Matrix LinearForward(const LinearLayer& layer, const Matrix& x, LinearCache* cache = nullptr);
// Pure gradients for cotangent dy.
LinearGrads LinearBackward(const LinearLayer& layer, const LinearCache& cache, const Matrix& dy);

// Stacked linear layers with a smooth activation (SiLU) between them and the
// identity after the last one.
class Mlp {
 public:
  struct Cache {
    std::vector<LinearCache> linear;
    std::vector<Matrix> pre_activation;
  };

  Mlp() = default;
  // widths = {in, hidden..., out}.
  Mlp(std::string name, const std::vector<int>& widths, std::uint64_t seed,
      Activation hidden = Activation::kSilu);

  Matrix Forward(const Matrix& x, Cache* cache = nullptr) const;
  // Accumulates parameter gradients; returns d input.
  Matrix Backward(const Cache& cache, const Matrix& dy);

  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index out_dim() const { return layers_.back().out_dim(); }
  std::vector<LinearLayer>& layers() { return layers_; }
  const std::vector<LinearLayer>& layers() const { return layers_; }
  ParamList Params();
  Eigen::Index ParamCount() const;

 private:
  std::vector<LinearLayer> layers_;
  Activation hidden_ = Activation::kSilu;
};

// Numerically stable softmax. Throws NumericError on NaN input.
Vector Softmax(const Vector& x);

// Single-head scaled dot-product attention over L tokens of width d. Each
// projection maps its input to L*d values, read as L row-major tokens.
struct Attention {
  Param wq;
  Param wk;
  Param wv;
  int tokens = 1;
  int token_dim = 1;

  struct Cache {
    Matrix query_in, key_in, value_in;
    Matrix q, k, v;                  // (L*d) x batch
    std::vector<Matrix> weights;     // per sample, L x L row-softmax
  };

  struct Grads {
    Matrix d_query;
    Matrix d_key;
    Matrix d_value;
  };

  Attention() = default;
  Attention(std::string name, Eigen::Index query_dim, Eigen::Index key_dim, Eigen::Index value_dim,
            int tokens, int token_dim, std::uint64_t seed);

  int width() const { return tokens * token_dim; }
  Matrix Forward(const Matrix& query_in, const Matrix& key_in, const Matrix& value_in,
                 Cache* cache = nullptr) const;
  // Accumulates projection gradients; returns input cotangents.
  Grads Backward(const Cache& cache, const Matrix& d_out);
  ParamList Params() { return {&wq, &wk, &wv}; }
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam keyed by parameter name.
class Adam {
 public:
  struct Moments {
    Matrix m;
    Matrix v;
  };

  explicit Adam(AdamOptions options = {}) : options_(options) {}

  // Updates every trainable block from its grad. Throws NumericError naming the
  // block if a gradient is not finite; no parameter is modified in that case.
  void Step(const ParamList& params);

  std::int64_t step() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }
  void Restore(std::int64_t step, std::map<std::string, Moments> moments);

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

struct GradCheckResult {
  std::map<std::string, double> max_rel_error;  // per block
  double max_rel_error_overall = 0.0;
};

// Compares analytic gradients with central differences.
//   loss:          evaluates the scalar objective at the current values
//   compute_grads: zeroes and fills Param::grad at the current values
// Probes that many random coordinates of every trainable block (all of them
// when the block is smaller). Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult GradCheck(const std::function<double()>& loss,
                          const std::function<void()>& compute_grads, const ParamList& params,
                          int probes, double h, std::uint64_t seed, double floor = 1e-7);

Eigen::Index TrainableCount(const ParamList& params);

}  // namespace fairdiff::nn
