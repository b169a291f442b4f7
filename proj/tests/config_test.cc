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


#include "fairdiff/config.h"

#include "gtest/gtest.h"
#include "test_util.h"

namespace fairdiff::config {
namespace {

TEST(ParseText, KeysCommentsAndErrors) {
  Entries e = ParseText("# run\nseed = 4\n\n  train.epochs=7  \n", "t");
  ASSERT_EQ(e.size(), 2u);
  EXPECT_EQ(e[0], (std::pair<std::string, std::string>{"seed", "4"}));
  EXPECT_EQ(e[1].second, "7");
  try {
    ParseText("seed = 1\nno equals sign\n", "t");
    FAIL();
  } catch (const ParseError& err) {
    EXPECT_EQ(err.line(), 2u);
  }
}

TEST(Apply, SetsTypedFields) {
  RunConfig c;
  Apply(c, ParseText("diffusion.steps = 50\nmodel.mlp1 = 32,16\nmodel.variant = no_encoder\n"
                     "dataset.kind = movielens\nattribute = age\nsplit.train = 0.7\n",
                     "t"));
  EXPECT_EQ(c.steps, 50);
  EXPECT_EQ(c.mlp1, (std::vector<int>{32, 16}));
  EXPECT_EQ(c.variant, model::Variant::kNoEncoder);
  EXPECT_EQ(c.dataset, data::DatasetKind::kMovieLens);
  EXPECT_EQ(c.attribute, data::Attribute::kAge);
  EXPECT_DOUBLE_EQ(c.split.train, 0.7);
}

TEST(Apply, RejectsUnknownKeysAndMalformedValues) {
  RunConfig c;
  EXPECT_THROW(Apply(c, {{"diffusion.stpes", "5"}}), ConfigError);
  EXPECT_THROW(Apply(c, {{"diffusion.steps", "five"}}), ConfigError);
  EXPECT_THROW(Apply(c, {{"model.variant", "tiny"}}), ConfigError);
}

TEST(Validate, RangeChecks) {
  auto rejects = [](const Entries& e) {
    RunConfig c;
    Apply(c, e);
    EXPECT_THROW(Validate(c), ConfigError) << e[0].first << "=" << e[0].second;
  };
  rejects({{"diffusion.steps", "0"}});
  rejects({{"diffusion.scale", "-1"}});
  rejects({{"train.batch_size", "0"}});
  rejects({{"train.lr", "0"}});
  rejects({{"predict.ensemble", "0"}});
  rejects({{"predict.t_start", "101"}});
  rejects({{"split.test", "0.3"}});
  rejects({{"attribute", "gender"}});  // synthetic data has no gender
  RunConfig ok;
  EXPECT_NO_THROW(Validate(ok));
}

TEST(Overrides, LaterSourcesWin) {
  RunConfig c;
  Apply(c, ParseText("seed = 3\neval.k = 5\n", "file"));
  Apply(c, ParseOverrides({"eval.k=9"}));
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.k, 9);
  EXPECT_THROW(ParseOverrides({"eval.k"}), ConfigError);
}

TEST(EffectiveK, DatasetDefaults) {
  RunConfig c;
  c.dataset = data::DatasetKind::kMovieLens;
  EXPECT_EQ(EffectiveK(c), 7);
  c.dataset = data::DatasetKind::kLastFm;
  EXPECT_EQ(EffectiveK(c), 10);
  c.k = 3;
  EXPECT_EQ(EffectiveK(c), 3);
}

TEST(Hash, IgnoresOutputLocationOnly) {
  RunConfig a, b;
  b.out_dir = "elsewhere";
  b.threads = 8;
  EXPECT_EQ(Hash(a), Hash(b));
  b.seed = 2;
  EXPECT_NE(Hash(a), Hash(b));
}

TEST(ToText, RoundTrips) {
  RunConfig a;
  a.mlp3 = {64, 32};
  a.scale = 0.0123;
  a.sweep_values = {1e-4, 1e-3};
  RunConfig b;
  Apply(b, ParseText(ToText(a), "canonical"));
  EXPECT_EQ(ToText(a), ToText(b));
  EXPECT_EQ(Hash(a), Hash(b));
}

}  // namespace
}  // namespace fairdiff::config
