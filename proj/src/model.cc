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

#include "fairdiff/model.h"

namespace fairdiff::model {

std::string ToString(Variant variant) {
  switch (variant) {
    case Variant::kFull: return "full";
    case Variant::kNoEncoder: return "no_encoder";
    case Variant::kNoCounterfactual: return "no_counterfactual";
  }
  return "?";
}

Variant ParseVariant(const std::string& name) {
  if (name == "full" || name == "base") return Variant::kFull;
  if (name == "no_encoder") return Variant::kNoEncoder;
  if (name == "no_counterfactual") return Variant::kNoCounterfactual;
  throw ConfigError("unknown model variant: " + name);
}

Matrix TimeEmbedding::Forward(const std::vector<int>& steps) const {
  Matrix out(table.value.cols(), static_cast<Eigen::Index>(steps.size()));
  for (std::size_t b = 0; b < steps.size(); ++b) {
    const int t = steps[b];
    if (t < 1 || t > table.value.rows())
      throw ShapeError("time step " + std::to_string(t) + " outside [1, " +
                       std::to_string(table.value.rows()) + "]");
    out.col(static_cast<Eigen::Index>(b)) = table.value.row(t - 1).transpose();
  }
  return out;
}

void TimeEmbedding::Backward(const std::vector<int>& steps, const Matrix& d_out) {
  if (!table.trainable) return;
  for (std::size_t b = 0; b < steps.size(); ++b)
    table.grad.row(steps[b] - 1) += d_out.col(static_cast<Eigen::Index>(b)).transpose();
}

namespace {

std::vector<int> Widths(int in, const std::vector<int>& rest) {
  std::vector<int> w{in};
  w.insert(w.end(), rest.begin(), rest.end());
  return w;
}

}  // namespace

NoisePredictor::NoisePredictor(const ModelConfig& config) : config_(config) {
  const auto& c = config_;
  if (c.num_items < 1) throw ConfigError("model: num_items must be >= 1");
  if (c.num_steps < 1) throw ConfigError("model: num_steps must be >= 1");
  if (c.time_dim < 1) throw ConfigError("model: time_dim must be >= 1");
  if (c.mlp1.empty() || c.mlp2.empty()) throw ConfigError("model: mlp1/mlp2 need an output width");

  time_.table = {"time.table", Matrix::Zero(c.num_steps, c.time_dim), {}, true};
  nn::InitFanInUniform(time_.table, c.num_steps, c.seed);
  time_.table.ZeroGrad();

  mlp1_ = nn::Mlp("mlp1", Widths(c.num_items + c.time_dim, c.mlp1), c.seed);
  const int feature_dim = c.mlp1.back();
  const int query_dim = c.mlp2.back();
  int head_in = feature_dim;
  if (c.variant != Variant::kNoCounterfactual) {
    if (c.variant == Variant::kFull) {
      encoder_ = nn::Mlp("mlp2", Widths(c.num_items, c.mlp2), c.seed);
    } else {
      fixed_encoder_ = nn::LinearLayer("fixed_encoder", c.num_items, query_dim, c.seed);
      fixed_encoder_.weight.trainable = false;
      fixed_encoder_.bias.trainable = false;
    }
    attention_ = nn::Attention("attention", query_dim, feature_dim, feature_dim, c.tokens,
                               c.token_dim, c.seed);
    head_in = attention_.width();
  }
  std::vector<int> head = Widths(head_in, c.mlp3);
  head.push_back(c.num_items);
  mlp3_ = nn::Mlp("mlp3", head, c.seed);
}

void NoisePredictor::CheckInputs(const Matrix& x_t, const std::vector<int>& steps,
                                 const Matrix& y) const {
  if (x_t.rows() != config_.num_items) throw ShapeError("eps_theta: x_t has wrong length");
  if (static_cast<Eigen::Index>(steps.size()) != x_t.cols())
    throw ShapeError("eps_theta: one step per column required");
  if (config_.variant != Variant::kNoCounterfactual &&
      (y.rows() != config_.num_items || y.cols() != x_t.cols()))
    throw ShapeError("eps_theta: condition y has wrong shape");
}

Matrix NoisePredictor::EncodeCondition(const Matrix& g) const {
  if (g.rows() != config_.num_items) throw ShapeError("condition encoder: wrong input length");
  switch (config_.variant) {
    case Variant::kFull: return encoder_.Forward(g);
    case Variant::kNoEncoder: return nn::LinearForward(fixed_encoder_, g);
    case Variant::kNoCounterfactual: break;
  }
  throw Error("condition encoder is absent in the no_counterfactual variant");
}

Matrix NoisePredictor::UserFeatures(const Matrix& x_t, const std::vector<int>& steps) const {
  Matrix in(config_.num_items + config_.time_dim, x_t.cols());
  in.topRows(config_.num_items) = x_t;
  in.bottomRows(config_.time_dim) = time_.Forward(steps);
  return mlp1_.Forward(in);
}

Matrix NoisePredictor::CounterfactualMap(const Matrix& z, const Matrix& y) const {
  if (config_.variant == Variant::kNoCounterfactual)
    throw Error("counterfactual module is absent in the no_counterfactual variant");
  return attention_.Forward(EncodeCondition(y), z, z);
}

Matrix NoisePredictor::Forward(const Matrix& x_t, const std::vector<int>& steps, const Matrix& y,
                               Cache* cache) const {
  CheckInputs(x_t, steps, y);
  Matrix in(config_.num_items + config_.time_dim, x_t.cols());
  in.topRows(config_.num_items) = x_t;
  in.bottomRows(config_.time_dim) = time_.Forward(steps);
  Matrix z = mlp1_.Forward(in, cache ? &cache->mlp1 : nullptr);

  Matrix h;
  switch (config_.variant) {
    case Variant::kNoCounterfactual:
      h = std::move(z);
      break;
    case Variant::kFull: {
      Matrix g_bar = encoder_.Forward(y, cache ? &cache->encoder : nullptr);
      h = attention_.Forward(g_bar, z, z, cache ? &cache->attention : nullptr);
      break;
    }
    case Variant::kNoEncoder: {
      Matrix g_bar = nn::LinearForward(fixed_encoder_, y, cache ? &cache->fixed_encoder : nullptr);
      h = attention_.Forward(g_bar, z, z, cache ? &cache->attention : nullptr);
      break;
    }
  }
  Matrix eps = mlp3_.Forward(h, cache ? &cache->mlp3 : nullptr);
  if (!eps.allFinite()) throw NumericError("eps_theta produced a non-finite output");
  if (cache) cache->steps = steps;
  return eps;
}

NoisePredictor::InputGrads NoisePredictor::Backward(const Cache& cache, const Matrix& d_eps) {
  Matrix d_h = mlp3_.Backward(cache.mlp3, d_eps);
  Matrix d_z;
  InputGrads out;
  switch (config_.variant) {
    case Variant::kNoCounterfactual:
      d_z = std::move(d_h);
      out.d_y = Matrix::Zero(config_.num_items, d_eps.cols());
      break;
    case Variant::kFull: {
      auto g = attention_.Backward(cache.attention, d_h);
      d_z = g.d_key + g.d_value;
      out.d_y = encoder_.Backward(cache.encoder, g.d_query);
      break;
    }
    case Variant::kNoEncoder: {
      auto g = attention_.Backward(cache.attention, d_h);
      d_z = g.d_key + g.d_value;
      out.d_y = nn::LinearBackward(fixed_encoder_, cache.fixed_encoder, g.d_query).d_input;
      break;
    }
  }
  Matrix d_in = mlp1_.Backward(cache.mlp1, d_z);
  out.d_x = d_in.topRows(config_.num_items);
  time_.Backward(cache.steps, d_in.bottomRows(config_.time_dim));
  return out;
}

nn::ParamList NoisePredictor::Params() {
  nn::ParamList out{&time_.table};
  auto append = [&out](nn::ParamList more) { out.insert(out.end(), more.begin(), more.end()); };
  append(mlp1_.Params());
  if (config_.variant == Variant::kFull) append(encoder_.Params());
  if (config_.variant == Variant::kNoEncoder) append(fixed_encoder_.Params());
  if (config_.variant != Variant::kNoCounterfactual) append(attention_.Params());
  append(mlp3_.Params());
  return out;
}

nn::ParamList NoisePredictor::TrainableParams() {
  nn::ParamList out;
  for (nn::Param* p : Params())
    if (p->trainable) out.push_back(p);
  return out;
}

Eigen::Index NoisePredictor::TrainableParamCount() { return nn::TrainableCount(Params()); }

void NoisePredictor::ZeroGrad() {
  for (nn::Param* p : Params()) p->ZeroGrad();
}

NoisePredictor AblationVariant(const ModelConfig& base, Variant kind) {
  ModelConfig c = base;
  c.variant = kind;
  return NoisePredictor(c);
}

}  // namespace fairdiff::model
