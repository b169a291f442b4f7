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

#include <set>

#include "gtest/gtest.h"
#include "test_util.h"

namespace fairdiff::model {
namespace {

using ::fairdiff::testing::RandomMatrix;

ModelConfig Small(Variant v = Variant::kFull) {
  ModelConfig c;
  c.num_items = 9;
  c.num_steps = 6;
  c.time_dim = 5;
  c.mlp1 = {12, 8};
  c.mlp2 = {10, 7};
  c.mlp3 = {11};
  c.tokens = 2;
  c.token_dim = 3;
  c.variant = v;
  c.seed = 3;
  return c;
}

TEST(NoisePredictor, ShapesAndPurity) {
  for (Variant v : {Variant::kFull, Variant::kNoEncoder, Variant::kNoCounterfactual}) {
    NoisePredictor net(Small(v));
    Matrix x = RandomMatrix(9, 4, 1), y = RandomMatrix(9, 4, 2);
    std::vector<int> steps{1, 3, 6, 2};
    Matrix a = net.Forward(x, steps, y);
    EXPECT_EQ(a.rows(), 9);
    EXPECT_EQ(a.cols(), 4);
    EXPECT_EQ(net.Forward(x, steps, y), a) << ToString(v);
    // Column b depends only on column b.
    Matrix one = net.Forward(x.col(2), {6}, y.col(2));
    EXPECT_LT((one - a.col(2)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(NoisePredictor, RejectsBadInputs) {
  NoisePredictor net(Small());
  Matrix x = RandomMatrix(9, 2, 1), y = RandomMatrix(9, 2, 2);
  EXPECT_THROW(net.Forward(x, {1, 7}, y), ShapeError);
  EXPECT_THROW(net.Forward(x, {0, 1}, y), ShapeError);
  EXPECT_THROW(net.Forward(x, {1}, y), ShapeError);
  EXPECT_THROW(net.Forward(RandomMatrix(8, 2, 1), {1, 1}, y), ShapeError);
  EXPECT_THROW(net.Forward(x, {1, 1}, RandomMatrix(9, 3, 1)), ShapeError);
  ModelConfig bad = Small();
  bad.num_steps = 0;
  EXPECT_THROW(NoisePredictor{bad}, ConfigError);
}

TEST(NoisePredictor, NoCounterfactualIgnoresCondition) {
  NoisePredictor net(Small(Variant::kNoCounterfactual));
  Matrix x = RandomMatrix(9, 3, 1);
  EXPECT_EQ(net.Forward(x, {1, 2, 3}, RandomMatrix(9, 3, 5)),
            net.Forward(x, {1, 2, 3}, RandomMatrix(9, 3, 6)));
  EXPECT_THROW(net.CounterfactualMap(RandomMatrix(8, 1, 1), RandomMatrix(9, 1, 1)), Error);
}

TEST(NoisePredictor, ConditionedVariantsDependOnCondition) {
  for (Variant v : {Variant::kFull, Variant::kNoEncoder}) {
    NoisePredictor net(Small(v));
    Matrix x = RandomMatrix(9, 3, 1);
    Matrix d = net.Forward(x, {1, 2, 3}, RandomMatrix(9, 3, 5)) -
               net.Forward(x, {1, 2, 3}, RandomMatrix(9, 3, 6));
    EXPECT_GT(d.cwiseAbs().maxCoeff(), 1e-8) << ToString(v);
  }
}

TEST(NoisePredictor, AblationParameterCounts) {
  NoisePredictor full(Small(Variant::kFull));
  NoisePredictor no_enc = AblationVariant(Small(), Variant::kNoEncoder);
  NoisePredictor no_cf = AblationVariant(Small(), Variant::kNoCounterfactual);
  const Eigen::Index mlp2 = full.encoder().ParamCount();
  EXPECT_EQ(mlp2, 9 * 10 + 10 + 10 * 7 + 7);
  EXPECT_EQ(full.TrainableParamCount() - no_enc.TrainableParamCount(), mlp2);
  // The frozen resize is present but not trainable.
  Eigen::Index frozen = 0;
  for (auto* p : no_enc.Params())
    if (!p->trainable) frozen += p->size();
  EXPECT_EQ(frozen, 9 * 7 + 7);
  EXPECT_LT(no_cf.TrainableParamCount(), no_enc.TrainableParamCount());

  std::set<std::string> names;
  for (auto* p : full.Params()) names.insert(p->name);
  for (const char* n : {"time.table", "mlp1.0.weight", "mlp1.1.bias", "mlp2.0.weight",
                        "mlp2.1.bias", "attention.wq", "attention.wk", "attention.wv",
                        "mlp3.0.weight", "mlp3.1.weight"})
    EXPECT_TRUE(names.contains(n)) << n;
}

TEST(NoisePredictor, SharedBlocksMatchAcrossVariants) {
  NoisePredictor full(Small(Variant::kFull));
  NoisePredictor no_enc(Small(Variant::kNoEncoder));
  EXPECT_EQ(full.mlp1().layers()[0].weight.value, no_enc.mlp1().layers()[0].weight.value);
  EXPECT_EQ(full.time().table.value, no_enc.time().table.value);
}

TEST(CounterfactualMap, ZeroFeaturesMapToZero) {
  NoisePredictor net(Small());
  Matrix z = Matrix::Zero(8, 3);
  EXPECT_EQ(net.CounterfactualMap(z, RandomMatrix(9, 3, 1)), Matrix::Zero(6, 3));
}

TEST(CounterfactualMap, SingleTokenIsValueProjection) {
  ModelConfig c = Small();
  c.tokens = 1;
  NoisePredictor net(c);
  Matrix z = RandomMatrix(8, 3, 1);
  Matrix out = net.CounterfactualMap(z, RandomMatrix(9, 3, 2));
  EXPECT_LT((out - net.attention().wv.value * z).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(CounterfactualMap, ComposesWithUserFeatures) {
  NoisePredictor net(Small());
  Matrix x = RandomMatrix(9, 2, 1), y = RandomMatrix(9, 2, 2);
  Matrix z = net.UserFeatures(x, {2, 5});
  Matrix eps = net.mlp3().Forward(net.CounterfactualMap(z, y));
  EXPECT_LT((eps - net.Forward(x, {2, 5}, y)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(NoisePredictor, EveryTrainableBlockGetsGradient) {
  for (Variant v : {Variant::kFull, Variant::kNoEncoder, Variant::kNoCounterfactual}) {
    NoisePredictor net(Small(v));
    Matrix x = RandomMatrix(9, 5, 1), y = RandomMatrix(9, 5, 2);
    std::vector<int> steps{1, 2, 3, 4, 5};
    net.ZeroGrad();
    NoisePredictor::Cache cache;
    net.Forward(x, steps, y, &cache);
    net.Backward(cache, RandomMatrix(9, 5, 3));
    for (auto* p : net.Params()) {
      if (p->trainable) {
        EXPECT_GT(p->grad.cwiseAbs().maxCoeff(), 0.0) << ToString(v) << " dead block " << p->name;
      } else {
        EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0) << p->name;
      }
    }
  }
}

TEST(NoisePredictor, InputGradientsMatchFiniteDifferences) {
  NoisePredictor net(Small());
  Matrix x = RandomMatrix(9, 2, 1), y = RandomMatrix(9, 2, 2), r = RandomMatrix(9, 2, 3);
  std::vector<int> steps{3, 4};
  net.ZeroGrad();
  NoisePredictor::Cache cache;
  net.Forward(x, steps, y, &cache);
  auto g = net.Backward(cache, r);
  const double h = 1e-6;
  for (Matrix* in : {&x, &y}) {
    const Matrix& analytic = in == &x ? g.d_x : g.d_y;
    for (Eigen::Index k = 0; k < in->size(); k += 3) {
      const double saved = in->data()[k];
      in->data()[k] = saved + h;
      const double up = net.Forward(x, steps, y).cwiseProduct(r).sum();
      in->data()[k] = saved - h;
      const double down = net.Forward(x, steps, y).cwiseProduct(r).sum();
      in->data()[k] = saved;
      const double numeric = (up - down) / (2 * h);
      EXPECT_NEAR(analytic.data()[k], numeric, 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST(TimeEmbedding, RowLookupAndScatter) {
  TimeEmbedding te;
  te.table = {"time.table", RandomMatrix(4, 3, 1), Matrix::Zero(4, 3), true};
  Matrix out = te.Forward({2, 2, 4});
  EXPECT_EQ(out.col(0), te.table.value.row(1).transpose());
  EXPECT_EQ(out.col(2), te.table.value.row(3).transpose());
  te.Backward({2, 2, 4}, Matrix::Ones(3, 3));
  EXPECT_EQ(te.table.grad.row(1), Eigen::RowVectorXd::Constant(3, 2.0));
  EXPECT_EQ(te.table.grad.row(0), Eigen::RowVectorXd::Zero(3));
}

}  // namespace
}  // namespace fairdiff::model
