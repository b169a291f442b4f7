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

#include "fairdiff/nn.h"

#include <algorithm>
#include <cmath>

namespace fairdiff::nn {
namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double Sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

void CheckRows(const Matrix& x, Eigen::Index rows, const char* what) {
  if (x.rows() != rows)
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " +
                     std::to_string(x.rows()));
}

}  // namespace

void InitFanInUniform(Param& p, Eigen::Index fan_in, std::uint64_t seed) {
  Rng rng(seed, "init:" + p.name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  for (Eigen::Index j = 0; j < p.value.cols(); ++j)
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      p.value(i, j) = bound * (2.0 * rng.Uniform() - 1.0);
}

Matrix Activate(Activation act, const Matrix& pre) {
  if (act == Activation::kIdentity) return pre;
  return pre.unaryExpr([](double x) { return x * Sigmoid(x); });
}

Matrix ActivateGrad(Activation act, const Matrix& pre) {
  if (act == Activation::kIdentity) return Matrix::Ones(pre.rows(), pre.cols());
  return pre.unaryExpr([](double x) {
    double s = Sigmoid(x);
    return s + x * s * (1.0 - s);
  });
}

LinearLayer::LinearLayer(std::string name, Eigen::Index in, Eigen::Index out, std::uint64_t seed) {
  weight.name = name + ".weight";
  weight.value = Matrix::Zero(out, in);
  bias.name = name + ".bias";
  bias.value = Matrix::Zero(out, 1);
  InitFanInUniform(weight, in, seed);
  weight.ZeroGrad();
  bias.ZeroGrad();
}

Matrix LinearForward(const LinearLayer& layer, const Matrix& x, LinearCache* cache) {
  CheckRows(x, layer.in_dim(), layer.weight.name.c_str());
  if (cache) cache->input = x;
  Matrix y = layer.weight.value * x;
  y.colwise() += layer.bias.value.col(0);
  return y;
}

LinearGrads LinearBackward(const LinearLayer& layer, const LinearCache& cache, const Matrix& dy) {
  CheckRows(dy, layer.out_dim(), layer.weight.name.c_str());
  if (dy.cols() != cache.input.cols()) throw ShapeError("linear backward: batch size mismatch");
  LinearGrads g;
  g.d_weight = dy * cache.input.transpose();
  g.d_bias = dy.rowwise().sum();
  g.d_input = layer.weight.value.transpose() * dy;
  return g;
}

Mlp::Mlp(std::string name, const std::vector<int>& widths, std::uint64_t seed, Activation hidden)
    : hidden_(hidden) {
  if (widths.size() < 2) throw ConfigError(name + ": an MLP needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1) throw ConfigError(name + ": widths must be positive");
    layers_.emplace_back(name + "." + std::to_string(l), widths[l], widths[l + 1], seed);
  }
}

Matrix Mlp::Forward(const Matrix& x, Cache* cache) const {
  if (cache) {
    cache->linear.assign(layers_.size(), {});
    cache->pre_activation.assign(layers_.size(), {});
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix pre = LinearForward(layers_[l], h, cache ? &cache->linear[l] : nullptr);
    const bool last = l + 1 == layers_.size();
    h = Activate(last ? Activation::kIdentity : hidden_, pre);
    if (cache) cache->pre_activation[l] = std::move(pre);
  }
  return h;
}

Matrix Mlp::Backward(const Cache& cache, const Matrix& dy) {
  Matrix grad = dy;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const bool last = l + 1 == layers_.size();
    if (!last) grad = grad.cwiseProduct(ActivateGrad(hidden_, cache.pre_activation[l]));
    LinearGrads g = LinearBackward(layers_[l], cache.linear[l], grad);
    if (layers_[l].weight.trainable) layers_[l].weight.grad += g.d_weight;
    if (layers_[l].bias.trainable) layers_[l].bias.grad += g.d_bias;
    grad = std::move(g.d_input);
  }
  return grad;
}

ParamList Mlp::Params() {
  ParamList out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

Eigen::Index Mlp::ParamCount() const {
  Eigen::Index count = 0;
  for (const auto& layer : layers_) count += layer.weight.size() + layer.bias.size();
  return count;
}

Vector Softmax(const Vector& x) {
  if (x.size() == 0) return x;
  if (x.hasNaN()) throw NumericError("softmax: NaN input");
  const double max = x.maxCoeff();
  Vector e = (x.array() - max).exp();
  return e / e.sum();
}

Attention::Attention(std::string name, Eigen::Index query_dim, Eigen::Index key_dim,
                     Eigen::Index value_dim, int tokens_, int token_dim_, std::uint64_t seed)
    : tokens(tokens_), token_dim(token_dim_) {
  if (tokens < 1 || token_dim < 1) throw ConfigError(name + ": tokens and token_dim must be >= 1");
  const Eigen::Index w = static_cast<Eigen::Index>(tokens) * token_dim;
  wq = {name + ".wq", Matrix::Zero(w, query_dim), {}, true};
  wk = {name + ".wk", Matrix::Zero(w, key_dim), {}, true};
  wv = {name + ".wv", Matrix::Zero(w, value_dim), {}, true};
  InitFanInUniform(wq, query_dim, seed);
  InitFanInUniform(wk, key_dim, seed);
  InitFanInUniform(wv, value_dim, seed);
  wq.ZeroGrad();
  wk.ZeroGrad();
  wv.ZeroGrad();
}

Matrix Attention::Forward(const Matrix& query_in, const Matrix& key_in, const Matrix& value_in,
                          Cache* cache) const {
  CheckRows(query_in, wq.value.cols(), "attention query");
  CheckRows(key_in, wk.value.cols(), "attention key");
  CheckRows(value_in, wv.value.cols(), "attention value");
  const Eigen::Index batch = query_in.cols();
  if (key_in.cols() != batch || value_in.cols() != batch)
    throw ShapeError("attention: batch size mismatch");
  Matrix q = wq.value * query_in;
  Matrix k = wk.value * key_in;
  Matrix v = wv.value * value_in;
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  Matrix out(width(), batch);
  std::vector<Matrix> weights;
  if (cache) weights.reserve(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    RowMajorMap qt(q.col(b).data(), tokens, token_dim);
    RowMajorMap kt(k.col(b).data(), tokens, token_dim);
    RowMajorMap vt(v.col(b).data(), tokens, token_dim);
    Matrix scores = qt * kt.transpose() * scale;
    Matrix p(tokens, tokens);
    for (int r = 0; r < tokens; ++r) p.row(r) = Softmax(scores.row(r).transpose()).transpose();
    RowMajorMutMap ot(out.col(b).data(), tokens, token_dim);
    ot = p * vt;
    if (cache) weights.push_back(std::move(p));
  }
  if (cache) {
    cache->query_in = query_in;
    cache->key_in = key_in;
    cache->value_in = value_in;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->weights = std::move(weights);
  }
  return out;
}

Attention::Grads Attention::Backward(const Cache& cache, const Matrix& d_out) {
  CheckRows(d_out, width(), "attention backward");
  const Eigen::Index batch = d_out.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(token_dim));
  Matrix dq(width(), batch), dk(width(), batch), dv(width(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    RowMajorMap qt(cache.q.col(b).data(), tokens, token_dim);
    RowMajorMap kt(cache.k.col(b).data(), tokens, token_dim);
    RowMajorMap vt(cache.v.col(b).data(), tokens, token_dim);
    RowMajorMap dot(d_out.col(b).data(), tokens, token_dim);
    const Matrix& p = cache.weights[b];
    Matrix dp = dot * vt.transpose();
    RowMajorMutMap(dv.col(b).data(), tokens, token_dim) = p.transpose() * dot;
    // Row-softmax Jacobian: dS = P ⊙ (dP - rowsum(P ⊙ dP)).
    Vector row_dot = p.cwiseProduct(dp).rowwise().sum();
    Matrix ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
    RowMajorMutMap(dq.col(b).data(), tokens, token_dim) = ds * kt;
    RowMajorMutMap(dk.col(b).data(), tokens, token_dim) = ds.transpose() * qt;
  }
  if (wq.trainable) wq.grad += dq * cache.query_in.transpose();
  if (wk.trainable) wk.grad += dk * cache.key_in.transpose();
  if (wv.trainable) wv.grad += dv * cache.value_in.transpose();
  return {wq.value.transpose() * dq, wk.value.transpose() * dk, wv.value.transpose() * dv};
}

void Adam::Step(const ParamList& params) {
  for (const Param* p : params) {
    if (!p->trainable) continue;
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      throw ShapeError("adam: gradient shape mismatch for " + p->name);
    if (!p->grad.allFinite()) throw NumericError("adam: non-finite gradient in block " + p->name);
  }
  ++step_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (Param* p : params) {
    if (!p->trainable) continue;
    auto [it, inserted] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (inserted) {
      mo.m = Matrix::Zero(p->value.rows(), p->value.cols());
      mo.v = Matrix::Zero(p->value.rows(), p->value.cols());
    }
    mo.m = options_.beta1 * mo.m + (1.0 - options_.beta1) * p->grad;
    mo.v = options_.beta2 * mo.v + (1.0 - options_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= options_.lr * (mo.m.array() / c1) /
                        ((mo.v.array() / c2).sqrt() + options_.eps);
  }
}

void Adam::Restore(std::int64_t step, std::map<std::string, Moments> moments) {
  step_ = step;
  moments_ = std::move(moments);
}

GradCheckResult GradCheck(const std::function<double()>& loss,
                          const std::function<void()>& compute_grads, const ParamList& params,
                          int probes, double h, std::uint64_t seed, double floor) {
  compute_grads();
  GradCheckResult result;
  for (Param* p : params) {
    if (!p->trainable) continue;
    Rng rng(seed, "gradcheck:" + p->name);
    const Eigen::Index size = p->value.size();
    std::vector<Eigen::Index> coords;
    if (size <= probes) {
      for (Eigen::Index c = 0; c < size; ++c) coords.push_back(c);
    } else {
      for (int k = 0; k < probes; ++k) coords.push_back(rng.UniformInt(0, size - 1));
    }
    double worst = 0.0;
    for (Eigen::Index c : coords) {
      double& w = p->value.data()[c];
      const double saved = w;
      w = saved + h;
      const double up = loss();
      w = saved - h;
      const double down = loss();
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[c];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    result.max_rel_error[p->name] = worst;
    result.max_rel_error_overall = std::max(result.max_rel_error_overall, worst);
  }
  return result;
}

Eigen::Index TrainableCount(const ParamList& params) {
  Eigen::Index count = 0;
  for (const Param* p : params)
    if (p->trainable) count += p->size();
  return count;
}

}  // namespace fairdiff::nn
