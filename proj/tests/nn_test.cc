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

#include <cmath>
#include <functional>
#include <limits>

#include "gtest/gtest.h"
#include "test_util.h"

namespace fairdiff::nn {
namespace {

using ::fairdiff::testing::RandomMatrix;

// Central differences over every coordinate of `m`, computed here rather than
// through nn::GradCheck.
Matrix NumericGrad(const std::function<double()>& f, Matrix& m, double h) {
  Matrix g(m.rows(), m.cols());
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const double saved = m.data()[k];
    m.data()[k] = saved + h;
    const double up = f();
    m.data()[k] = saved - h;
    const double down = f();
    m.data()[k] = saved;
    g.data()[k] = (up - down) / (2 * h);
  }
  return g;
}

double MaxRelError(const Matrix& analytic, const Matrix& numeric, double floor = 1e-7) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < analytic.size(); ++k) {
    const double a = analytic.data()[k], n = numeric.data()[k];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

TEST(Linear, WorkedExamples) {
  LinearLayer layer("l", 2, 2, 1);
  layer.weight.value = Matrix::Identity(2, 2);
  layer.bias.value.setZero();
  Matrix x(2, 1);
  x << 3, -4;
  EXPECT_EQ(LinearForward(layer, x), x);
  layer.weight.value << 1, 2, 3, 4;
  layer.bias.value << 1, 1;
  x << 1, 1;
  Matrix want(2, 1);
  want << 4, 8;
  EXPECT_EQ(LinearForward(layer, x), want);
  EXPECT_THROW(LinearForward(layer, Matrix::Zero(3, 1)), ShapeError);
}

TEST(Linear, MatchesLoopOracle) {
  LinearLayer layer("l", 7, 5, 3);
  layer.bias.value = RandomMatrix(5, 1, 2);
  Matrix x = RandomMatrix(7, 4, 9);
  Matrix y = LinearForward(layer, x);
  for (int b = 0; b < 4; ++b)
    for (int o = 0; o < 5; ++o) {
      double s = layer.bias.value(o, 0);
      for (int i = 0; i < 7; ++i) s += layer.weight.value(o, i) * x(i, b);
      EXPECT_NEAR(y(o, b), s, 1e-13);
    }
}

TEST(Linear, InitIsFanInUniformAndSeeded) {
  LinearLayer a("enc.0", 16, 9, 5), b("enc.0", 16, 9, 5), c("enc.1", 16, 9, 5);
  EXPECT_EQ(a.weight.value, b.weight.value);
  EXPECT_NE(a.weight.value, c.weight.value);
  EXPECT_LE(a.weight.value.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_EQ(a.bias.value, Matrix::Zero(9, 1));
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
  LinearLayer layer("l", 6, 4, 1);
  layer.bias.value = RandomMatrix(4, 1, 3);
  Matrix x = RandomMatrix(6, 3, 4);
  Matrix r = RandomMatrix(4, 3, 5);  // random readout
  auto loss = [&] { return LinearForward(layer, x).cwiseProduct(r).sum(); };
  LinearCache cache;
  LinearForward(layer, x, &cache);
  LinearGrads g = LinearBackward(layer, cache, r);
  EXPECT_LT(MaxRelError(g.d_weight, NumericGrad(loss, layer.weight.value, 1e-5)), 1e-6);
  EXPECT_LT(MaxRelError(g.d_bias, NumericGrad(loss, layer.bias.value, 1e-5)), 1e-6);
  EXPECT_LT(MaxRelError(g.d_input, NumericGrad(loss, x, 1e-5)), 1e-6);
}

TEST(Mlp, ZeroWeightsGiveLastBias) {
  Mlp mlp("m", {3, 5, 2}, 1);
  for (auto* p : mlp.Params()) p->value.setZero();
  mlp.layers().back().bias.value << 0.5, -2.0;
  Matrix out = mlp.Forward(RandomMatrix(3, 4, 1));
  for (int b = 0; b < 4; ++b) {
    EXPECT_EQ(out(0, b), 0.5);
    EXPECT_EQ(out(1, b), -2.0);
  }
  EXPECT_EQ(mlp.ParamCount(), 3 * 5 + 5 + 5 * 2 + 2);
  EXPECT_THROW(Mlp("bad", {3}, 1), ConfigError);
}

TEST(Mlp, SiluHiddenIdentityOutput) {
  Mlp mlp("m", {2, 2, 2}, 1);
  mlp.layers()[0].weight.value = Matrix::Identity(2, 2);
  mlp.layers()[0].bias.value.setZero();
  mlp.layers()[1].weight.value = Matrix::Identity(2, 2);
  mlp.layers()[1].bias.value.setZero();
  Matrix x(2, 1);
  x << 1.0, -3.0;
  Matrix y = mlp.Forward(x);
  EXPECT_NEAR(y(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(y(1, 0), -3.0 / (1.0 + std::exp(3.0)), 1e-15);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Mlp mlp("m", {5, 7, 6, 3}, 2);
  for (auto* p : mlp.Params()) p->value = RandomMatrix(p->value.rows(), p->value.cols(), 3, p->name);
  Matrix x = RandomMatrix(5, 4, 7);
  Matrix r = RandomMatrix(3, 4, 8);
  auto loss = [&] { return mlp.Forward(x).cwiseProduct(r).sum(); };
  for (auto* p : mlp.Params()) p->ZeroGrad();
  Mlp::Cache cache;
  mlp.Forward(x, &cache);
  Matrix dx = mlp.Backward(cache, r);
  for (auto* p : mlp.Params())
    EXPECT_LT(MaxRelError(p->grad, NumericGrad(loss, p->value, 1e-5)), 1e-6) << p->name;
  EXPECT_LT(MaxRelError(dx, NumericGrad(loss, x, 1e-5)), 1e-6);

  // The library checker agrees on 20 probes per block.
  auto compute = [&] {
    for (auto* p : mlp.Params()) p->ZeroGrad();
    Mlp::Cache c;
    mlp.Forward(x, &c);
    mlp.Backward(c, r);
  };
  GradCheckResult res = GradCheck(loss, compute, mlp.Params(), 20, 1e-6, 1);
  EXPECT_LT(res.max_rel_error_overall, 1e-5);
  EXPECT_EQ(res.max_rel_error.size(), 6u);
}

TEST(GradCheck, DetectsWrongGradient) {
  Mlp mlp("m", {3, 4, 2}, 2);
  Matrix x = RandomMatrix(3, 2, 1), r = RandomMatrix(2, 2, 2);
  auto loss = [&] { return mlp.Forward(x).cwiseProduct(r).sum(); };
  auto compute = [&] {
    for (auto* p : mlp.Params()) p->ZeroGrad();
    Mlp::Cache c;
    mlp.Forward(x, &c);
    mlp.Backward(c, r);
    mlp.layers()[0].weight.grad *= 1.05;
  };
  GradCheckResult res = GradCheck(loss, compute, mlp.Params(), 20, 1e-6, 1);
  EXPECT_GT(res.max_rel_error.at("m.0.weight"), 1e-2);
  EXPECT_LT(res.max_rel_error.at("m.1.weight"), 1e-5);
}

TEST(Softmax, Cases) {
  Vector x(3);
  x << 0, 0, 0;
  EXPECT_TRUE(Softmax(x).isApprox(Vector::Constant(3, 1.0 / 3), 1e-15));
  x << 1000, 0, -1000;
  Vector p = Softmax(x);
  EXPECT_NEAR(p(0), 1.0, 1e-15);
  EXPECT_TRUE(p.allFinite());
  x << std::log(1.0), std::log(2.0), std::log(3.0);
  Vector want(3);
  want << 1.0 / 6, 2.0 / 6, 3.0 / 6;
  EXPECT_LT((Softmax(x) - want).cwiseAbs().maxCoeff(), 1e-15);
  x(1) = std::nan("");
  EXPECT_THROW(Softmax(x), NumericError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Vector x = RandomMatrix(9, 1, seed) * 30.0;
    Vector p = Softmax(x);
    EXPECT_NEAR(p.sum(), 1.0, 1e-14);
    EXPECT_LT((Softmax((x.array() + 123.4).matrix()) - p).cwiseAbs().maxCoeff(), 1e-14);
  }
}

// Token-by-token loops over the flattened projections.
Matrix AttentionOracle(const Attention& at, const Matrix& qin, const Matrix& kin, const Matrix& vin) {
  const int L = at.tokens, d = at.token_dim;
  Matrix q = at.wq.value * qin, k = at.wk.value * kin, v = at.wv.value * vin;
  Matrix out(L * d, qin.cols());
  for (Eigen::Index b = 0; b < qin.cols(); ++b) {
    for (int i = 0; i < L; ++i) {
      std::vector<double> s(L);
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < L; ++j) {
        s[j] = 0.0;
        for (int e = 0; e < d; ++e) s[j] += q(i * d + e, b) * k(j * d + e, b);
        s[j] /= std::sqrt(static_cast<double>(d));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (int j = 0; j < L; ++j) z += std::exp(s[j] - mx);
      for (int e = 0; e < d; ++e) {
        double acc = 0.0;
        for (int j = 0; j < L; ++j) acc += std::exp(s[j] - mx) / z * v(j * d + e, b);
        out(i * d + e, b) = acc;
      }
    }
  }
  return out;
}

TEST(Attention, MatchesLoopOracle) {
  Attention at("a", 5, 6, 6, 3, 4, 1);
  Matrix qin = RandomMatrix(5, 3, 1), kin = RandomMatrix(6, 3, 2);
  Matrix out = at.Forward(qin, kin, kin);
  EXPECT_LT((out - AttentionOracle(at, qin, kin, kin)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Attention, SingleTokenReturnsValues) {
  Attention at("a", 4, 4, 4, 1, 3, 2);
  Matrix qin = RandomMatrix(4, 2, 1), kin = RandomMatrix(4, 2, 2);
  Matrix out = at.Forward(qin, kin, kin);
  EXPECT_LT((out - at.wv.value * kin).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  Attention at("a", 3, 2, 2, 4, 2, 3);
  at.wk.value.setZero();  // every key token is 0
  Matrix qin = RandomMatrix(3, 1, 1), kin = RandomMatrix(2, 1, 2);
  Attention::Cache cache;
  Matrix out = at.Forward(qin, kin, kin, &cache);
  EXPECT_LT((cache.weights[0] - Matrix::Constant(4, 4, 0.25)).cwiseAbs().maxCoeff(), 1e-15);
  Matrix v = at.wv.value * kin;
  for (int e = 0; e < 2; ++e) {
    double mean = 0.0;
    for (int j = 0; j < 4; ++j) mean += v(j * 2 + e, 0) / 4;
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(out(i * 2 + e, 0), mean, 1e-15);
  }
}

TEST(Attention, BackwardMatchesFiniteDifferences) {
  Attention at("a", 5, 6, 4, 3, 2, 1);
  for (auto* p : at.Params()) p->value = RandomMatrix(p->value.rows(), p->value.cols(), 4, p->name);
  Matrix qin = RandomMatrix(5, 3, 1), kin = RandomMatrix(6, 3, 2), vin = RandomMatrix(4, 3, 3);
  Matrix r = RandomMatrix(6, 3, 9);
  auto loss = [&] { return at.Forward(qin, kin, vin).cwiseProduct(r).sum(); };
  for (auto* p : at.Params()) p->ZeroGrad();
  Attention::Cache cache;
  at.Forward(qin, kin, vin, &cache);
  Attention::Grads g = at.Backward(cache, r);
  for (auto* p : at.Params())
    EXPECT_LT(MaxRelError(p->grad, NumericGrad(loss, p->value, 1e-5)), 1e-6) << p->name;
  EXPECT_LT(MaxRelError(g.d_query, NumericGrad(loss, qin, 1e-5)), 1e-6);
  EXPECT_LT(MaxRelError(g.d_key, NumericGrad(loss, kin, 1e-5)), 1e-6);
  EXPECT_LT(MaxRelError(g.d_value, NumericGrad(loss, vin, 1e-5)), 1e-6);
}

TEST(Attention, ExtremeInputsStayFinite) {
  Attention at("a", 3, 3, 3, 2, 2, 1);
  Matrix big = Matrix::Constant(3, 2, 1e150);
  big(1, 1) = -1e150;
  EXPECT_TRUE(AllFinite(at.Forward(Matrix::Constant(3, 2, 1e3), big * 1e-147, big * 1e-147)));
  Mlp mlp("m", {3, 4, 2}, 1);
  EXPECT_TRUE(AllFinite(mlp.Forward(Matrix::Constant(3, 2, -1e4))));
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Param p{"w", RandomMatrix(3, 2, 1), Matrix::Zero(3, 2), true};
  Matrix before = p.value;
  Adam adam;
  for (int i = 0; i < 10; ++i) adam.Step({&p});
  EXPECT_EQ(p.value, before);
  EXPECT_EQ(adam.step(), 10);
}

TEST(Adam, MatchesScalarReference) {
  // Minimize w^2 from w = 1 with a hand-written scalar Adam.
  AdamOptions opt;
  opt.lr = 0.1;
  Param p{"w", Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1), true};
  Adam adam(opt);
  double w = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 50; ++t) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    adam.Step({&p});
    const double g = 2.0 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1.0 - std::pow(0.9, t)), vhat = v / (1.0 - std::pow(0.999, t));
    w -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    ASSERT_NEAR(p.value(0, 0), w, 1e-12) << "step " << t;
  }
}

TEST(Adam, ConvergesToQuadraticMinimum) {
  Param p{"w", Matrix::Zero(2, 1), Matrix::Zero(2, 1), true};
  Vector target(2);
  target << 3.0, -2.0;
  Adam adam;
  for (int t = 0; t < 10000; ++t) {
    p.grad = p.value - target;
    adam.Step({&p});
  }
  EXPECT_NEAR(p.value(0, 0), 3.0, 0.03);
  EXPECT_NEAR(p.value(1, 0), -2.0, 0.02);
}

TEST(Adam, NonFiniteGradientNamesBlockAndModifiesNothing) {
  Param a{"good", Matrix::Ones(2, 2), Matrix::Ones(2, 2), true};
  Param b{"mlp3.0.weight", Matrix::Ones(2, 2), Matrix::Ones(2, 2), true};
  b.grad(1, 0) = std::nan("");
  Adam adam;
  try {
    adam.Step({&a, &b});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("mlp3.0.weight"), std::string::npos);
  }
  EXPECT_EQ(a.value, Matrix::Ones(2, 2));
  EXPECT_EQ(adam.step(), 0);
}

TEST(Adam, FrozenBlocksAreSkipped) {
  Param p{"frozen", Matrix::Ones(2, 1), Matrix::Ones(2, 1), false};
  Adam adam;
  adam.Step({&p});
  EXPECT_EQ(p.value, Matrix::Ones(2, 1));
  EXPECT_EQ(TrainableCount({&p}), 0);
}

}  // namespace
}  // namespace fairdiff::nn
