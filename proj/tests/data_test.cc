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

#include "fairdiff/data.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "fairdiff/synthetic.h"
#include "gtest/gtest.h"
#include "test_util.h"

namespace fairdiff::data {
namespace {

using ::fairdiff::testing::TempDir;
using ::fairdiff::testing::WriteText;

RatingDataset TinyMovieLens(const TempDir& dir) {
  WriteText(dir / "ratings.dat",
            "1::1193::5::978300760\n"
            "1::661::3::978302109\n"
            "2::1193::4::978298413\n"
            "2::661::1::978299000\n"
            "1::1193::2::978300000\n");  // older duplicate, dropped
  WriteText(dir / "users.dat", "1::F::1::10::48067\n2::M::56::16::70072\n");
  return ParseMovieLens(dir / "ratings.dat", dir / "users.dat");
}

TEST(ParseMovieLens, ReadsFieldsAndMetadata) {
  TempDir dir;
  RatingDataset ds = TinyMovieLens(dir);
  ASSERT_EQ(ds.events.size(), 4u);
  // Sorted by (user, item) with numeric ids.
  EXPECT_EQ(ds.events[0].user_id, "1");
  EXPECT_EQ(ds.events[0].item_id, "661");
  EXPECT_EQ(ds.events[1].item_id, "1193");
  EXPECT_DOUBLE_EQ(ds.events[1].rating, 5.0);
  EXPECT_EQ(*ds.events[1].timestamp, 978300760);
  EXPECT_EQ(*ds.users.at("1").gender, 'F');
  EXPECT_EQ(*ds.users.at("1").age, 1);
  EXPECT_EQ(*ds.users.at("2").age, 56);
}

TEST(ParseMovieLens, SingleLine) {
  TempDir dir;
  WriteText(dir / "r.dat", "1::1193::5::978300760\n");
  WriteText(dir / "u.dat", "1::F::1::10::48067\n");
  RatingDataset ds = ParseMovieLens(dir / "r.dat", dir / "u.dat");
  ASSERT_EQ(ds.events.size(), 1u);
  EXPECT_EQ(ds.events[0].user_id, "1");
  EXPECT_EQ(ds.events[0].item_id, "1193");
  EXPECT_EQ(ds.events[0].rating, 5.0);
  EXPECT_EQ(ds.events[0].timestamp, 978300760);
}

TEST(ParseMovieLens, MalformedLineReportsLineNumber) {
  TempDir dir;
  WriteText(dir / "r.dat", "1::1193::5::978300760\n1::1193::x\n");
  WriteText(dir / "u.dat", "1::F::1::10::48067\n");
  try {
    ParseMovieLens(dir / "r.dat", dir / "u.dat");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(ParseMovieLens, UnknownUserAndEmptyFile) {
  TempDir dir;
  WriteText(dir / "r.dat", "7::1::5::1\n");
  WriteText(dir / "u.dat", "1::F::1::10::48067\n");
  EXPECT_THROW(ParseMovieLens(dir / "r.dat", dir / "u.dat"), Error);
  WriteText(dir / "empty.dat", "");
  EXPECT_THROW(ParseMovieLens(dir / "empty.dat", dir / "u.dat"), Error);
}

TEST(ParseLastFm, SumsDuplicatesAndCountsTags) {
  TempDir dir;
  WriteText(dir / "ua.dat",
            "userID\tartistID\tweight\n"
            "2\t51\t13883\n"
            "2\t52\t100\n"
            "3\t51\t7\n"
            "3\t51\t3\n");
  WriteText(dir / "tags.dat",
            "userID\tartistID\ttagID\tday\tmonth\tyear\n"
            "9\t51\t1\t1\t1\t2008\n"
            "9\t51\t2\t1\t1\t2008\n"
            "8\t52\t2\t1\t1\t2008\n"
            "8\t52\t3\t1\t1\t2008\n");
  RatingDataset ds = ParseLastFm(dir / "ua.dat", dir / "tags.dat");
  ASSERT_EQ(ds.events.size(), 3u);
  EXPECT_EQ(ds.events[0].user_id, "2");
  EXPECT_EQ(ds.events[0].item_id, "51");
  EXPECT_DOUBLE_EQ(ds.events[0].rating, 13883.0);
  EXPECT_DOUBLE_EQ(ds.events[2].rating, 10.0);
  EXPECT_DOUBLE_EQ(*ds.users.at("2").total_plays, 13983.0);
  EXPECT_EQ(*ds.users.at("2").distinct_tags, 3);  // tags {1,2} on 51 and {2,3} on 52
  EXPECT_EQ(*ds.users.at("3").distinct_tags, 2);
}

TEST(ParseLastFm, RejectsNonNumericWeight) {
  TempDir dir;
  WriteText(dir / "ua.dat", "userID\tartistID\tweight\n2\t51\tlots\n");
  EXPECT_THROW(ParseLastFm(dir / "ua.dat", std::nullopt), ParseError);
}

TEST(ParseLastFm, UserWithoutArtistsIsAbsent) {
  TempDir dir;
  WriteText(dir / "ua.dat", "userID\tartistID\tweight\n2\t51\t5\n");
  WriteText(dir / "tags.dat", "userID\tartistID\ttagID\n4\t51\t1\n");
  RatingDataset ds = ParseLastFm(dir / "ua.dat", dir / "tags.dat");
  EXPECT_EQ(UserIndex(ds).size(), 1);
  EXPECT_FALSE(ds.users.contains("4"));
}

TEST(AssignGroups, GenderAndAgeBoundary) {
  TempDir dir;
  RatingDataset ds = TinyMovieLens(dir);
  IdIndex users = UserIndex(ds);
  GroupAssignment g = AssignGroups(ds, users, Attribute::kGender);
  EXPECT_EQ(g.s, (std::vector<std::uint8_t>{0, 1}));
  GroupAssignment a = AssignGroups(ds, users, Attribute::kAge);
  EXPECT_EQ(a.s, (std::vector<std::uint8_t>{0, 1}));

  ds.users.at("2").age = 50;  // the boundary belongs to the high group
  EXPECT_EQ(AssignGroups(ds, users, Attribute::kAge).s[1], 1);
  ds.users.at("2").age = 49;
  EXPECT_THROW(AssignGroups(ds, users, Attribute::kAge), Error);  // old group empty
}

TEST(AssignGroups, ActivityBoundaryIsInclusiveHigh) {
  RatingDataset ds;
  ds.kind = DatasetKind::kLastFm;
  ds.events = {{"1", "a", 15000.0, {}}, {"2", "a", 14999.0, {}}};
  ds.users["1"].total_plays = 15000.0;
  ds.users["2"].total_plays = 14999.0;
  GroupAssignment g = AssignGroups(ds, UserIndex(ds), Attribute::kActivityLevel);
  EXPECT_EQ(g.s, (std::vector<std::uint8_t>{1, 0}));
  EXPECT_THROW(AssignGroups(ds, UserIndex(ds), Attribute::kInterestDiversity), Error);
}

TEST(AssignGroups, ExactCover) {
  SyntheticConfig cfg;
  cfg.users = 40;
  cfg.items = 50;
  RatingDataset ds = GeneratePlantedBias(cfg);
  IdIndex users = UserIndex(ds);
  GroupAssignment g = AssignGroups(ds, users, Attribute::kPlanted);
  std::vector<int> seen(users.size(), 0);
  for (int j : g.group_a) seen[j] += 1;
  for (int j : g.group_b) seen[j] += 1;
  for (int j = 0; j < users.size(); ++j) {
    EXPECT_EQ(seen[j], 1);
    EXPECT_EQ(g.s[j] == 0, std::find(g.group_a.begin(), g.group_a.end(), j) != g.group_a.end());
  }
  EXPECT_FALSE(g.group_a.empty());
  EXPECT_FALSE(g.group_b.empty());
}

TEST(BuildMatrix, TwoPointMinMax) {
  RatingDataset ds;
  ds.events = {{"u1", "i1", 5.0, {}}, {"u2", "i2", 1.0, {}}};
  InteractionMatrix mat = BuildMatrix(ds, NormalizationScheme::kMinMax);
  Matrix want(2, 2);
  want << 1, 0, 0, -1;
  EXPECT_EQ(mat.ratings, want);
  EXPECT_EQ(mat.mask(0, 0), 1);
  EXPECT_EQ(mat.mask(0, 1), 0);
  EXPECT_EQ(mat.mask(1, 0), 0);
  EXPECT_EQ(mat.mask(1, 1), 1);
}

TEST(BuildMatrix, ZeroRangeMapsToZero) {
  RatingDataset ds;
  ds.events = {{"u1", "i1", 4.0, {}}, {"u2", "i2", 4.0, {}}, {"u2", "i1", 4.0, {}}};
  InteractionMatrix mat = BuildMatrix(ds, NormalizationScheme::kMinMax);
  EXPECT_EQ(mat.ratings.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(mat.normalization.Denormalize(0.0), 4.0);
}

TEST(BuildMatrix, DuplicatePairRejected) {
  RatingDataset ds;
  ds.events = {{"u1", "i1", 4.0, {}}, {"u1", "i1", 3.0, {}}};
  EXPECT_THROW(BuildMatrix(ds, NormalizationScheme::kMinMax), Error);
}

TEST(BuildMatrix, Log1pRoundTrip) {
  RatingDataset ds;
  Rng rng(3, "plays");
  for (int u = 0; u < 20; ++u)
    ds.events.push_back({std::to_string(u), "a", std::floor(std::exp(rng.Uniform() * 11.5)), {}});
  InteractionMatrix mat = BuildMatrix(ds, NormalizationScheme::kLog1pMinMax);
  double max_rating = 0.0;
  for (const auto& e : ds.events) max_rating = std::max(max_rating, e.rating);
  double worst = 0.0;
  for (int j = 0; j < mat.num_users(); ++j) {
    const double r = ds.events[j].rating;
    const double v = mat.ratings(0, mat.users.Find(ds.events[j].user_id));
    EXPECT_LE(std::abs(v), 1.0 + 1e-15);
    if (r == max_rating) EXPECT_DOUBLE_EQ(v, 1.0);
    // Relative to the rating: play counts reach 1e5 where one ulp is ~1e-11.
    worst = std::max(worst, std::abs(mat.normalization.Denormalize(v) - r) / std::max(1.0, r));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(BuildMatrix, StarRoundTripAndZeroOffMask) {
  SyntheticConfig cfg;
  RatingDataset ds = GeneratePlantedBias(cfg);
  InteractionMatrix mat = BuildMatrix(ds, NormalizationScheme::kMinMax);
  for (const auto& e : ds.events) {
    const int i = mat.items.Find(e.item_id), j = mat.users.Find(e.user_id);
    ASSERT_EQ(mat.mask(i, j), 1);
    EXPECT_LT(std::abs(mat.normalization.Denormalize(mat.ratings(i, j)) - e.rating), 1e-12);
  }
  for (Eigen::Index k = 0; k < mat.ratings.size(); ++k)
    if (!mat.mask.data()[k]) EXPECT_EQ(mat.ratings.data()[k], 0.0);
}

TEST(BuildMatrix, FitMaskChangesOnlyTheScale) {
  RatingDataset ds;
  ds.events = {{"u1", "i1", 1.0, {}}, {"u1", "i2", 3.0, {}}, {"u1", "i3", 5.0, {}}};
  InteractionMatrix all = BuildMatrix(ds, NormalizationScheme::kMinMax);
  MaskMatrix fit = all.mask;
  fit(2, 0) = 0;  // fit on {1, 3}
  InteractionMatrix part = BuildMatrix(ds, NormalizationScheme::kMinMax, &fit);
  EXPECT_EQ(part.normalization.lo, 1.0);
  EXPECT_EQ(part.normalization.hi, 3.0);
  EXPECT_EQ(part.ratings(2, 0), 3.0);  // 5 lies outside the fitted range
  EXPECT_EQ(part.normalization.Denormalize(part.ratings(2, 0)), 5.0);
}

InteractionMatrix MatrixWithCounts(const std::vector<int>& counts, int items) {
  RatingDataset ds;
  for (std::size_t u = 0; u < counts.size(); ++u)
    for (int i = 0; i < counts[u]; ++i)
      ds.events.push_back({std::to_string(u), std::to_string(i), 1.0 + (i % 5), {}});
  ds.events.push_back({"0", std::to_string(items - 1), 1.0, {}});
  Aggregate(ds);
  return BuildMatrix(ds, NormalizationScheme::kMinMax);
}

TEST(Split, RatioArithmetic) {
  InteractionMatrix mat = MatrixWithCounts({20, 13, 12, 31}, 40);
  // Counts after the extra event on user 0: 21, 13, 12, 31.
  DatasetSplit s = Split(mat, {}, 10, 5);
  auto count = [](const MaskMatrix& m, int j) { return (m.col(j).array() != 0).count(); };
  EXPECT_EQ(count(s.train, 0), 17);  // 21: floor(2.1) = 2 val, 2 test
  EXPECT_EQ(count(s.val, 0), 2);
  EXPECT_EQ(count(s.test, 0), 2);
  EXPECT_EQ(count(s.train, 1), 11);  // 13: 1 val, 1 test
  EXPECT_EQ(count(s.val, 1), 1);
  EXPECT_EQ(count(s.test, 1), 1);
  EXPECT_EQ(s.dropped_users, std::vector<int>{2});
  EXPECT_EQ(count(s.train, 2) + count(s.val, 2) + count(s.test, 2), 0);
  EXPECT_EQ(count(s.train, 3), 25);  // 31: 3 val, 3 test
}

TEST(Split, TwentyInteractions) {
  InteractionMatrix mat = MatrixWithCounts({19}, 20);  // 19 + the extra cell = 20
  DatasetSplit s = Split(mat, {}, 10, 1);
  EXPECT_EQ((s.train.array() != 0).count(), 16);
  EXPECT_EQ((s.val.array() != 0).count(), 2);
  EXPECT_EQ((s.test.array() != 0).count(), 2);
}

TEST(Split, RebalancesTowardMinTrain) {
  InteractionMatrix mat = MatrixWithCounts({12}, 13);  // 13 interactions
  SplitRatios r{0.6, 0.2, 0.2};                          // 2 val, 2 test, 9 train at first
  DatasetSplit s = Split(mat, r, 10, 1);
  EXPECT_EQ((s.train.array() != 0).count(), 10);
  EXPECT_EQ((s.val.array() != 0).count() + (s.test.array() != 0).count(), 3);
}

TEST(Split, RatiosMustSumToOne) {
  InteractionMatrix mat = MatrixWithCounts({20}, 21);
  EXPECT_THROW(Split(mat, {0.8, 0.1, 0.2}, 10, 1), ConfigError);
}

TEST(Split, PartitionAndDeterminismProperty) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticConfig cfg;
    cfg.users = 30;
    cfg.items = 40;
    cfg.seed = seed;
    InteractionMatrix mat = BuildMatrix(GeneratePlantedBias(cfg), NormalizationScheme::kMinMax);
    DatasetSplit a = Split(mat, {}, 10, seed);
    DatasetSplit b = Split(mat, {}, 10, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.val, b.val);
    EXPECT_EQ(a.test, b.test);
    for (Eigen::Index k = 0; k < mat.mask.size(); ++k) {
      const int total = a.train.data()[k] + a.val.data()[k] + a.test.data()[k];
      ASSERT_EQ(total, mat.mask.data()[k]);
    }
    for (int j = 0; j < mat.num_users(); ++j) EXPECT_GE((a.train.col(j).array() != 0).count(), 10);
  }
}

TEST(Dump, RoundTripAndFingerprint) {
  TempDir dir;
  SyntheticConfig cfg;
  cfg.users = 25;
  cfg.items = 50;
  RatingDataset ds = GeneratePlantedBias(cfg);
  DatasetDump dump;
  dump.kind = DatasetKind::kSynthetic;
  dump.matrix = BuildMatrix(ds, NormalizationScheme::kMinMax);
  dump.groups = AssignGroups(ds, dump.matrix.users, Attribute::kPlanted);
  dump.split = Split(dump.matrix, {}, 10, 3);
  const std::string fp = WriteDump(dir / "a", dump);
  EXPECT_EQ(fp, DumpFingerprint(dir / "a"));

  DatasetDump back = ReadDump(dir / "a");
  EXPECT_EQ(back.matrix.ratings, dump.matrix.ratings);
  EXPECT_EQ(back.matrix.mask, dump.matrix.mask);
  EXPECT_EQ(back.split.train, dump.split.train);
  EXPECT_EQ(back.split.test, dump.split.test);
  EXPECT_EQ(back.groups.s, dump.groups.s);
  EXPECT_EQ(back.matrix.users.ids(), dump.matrix.users.ids());
  EXPECT_EQ(back.matrix.normalization.lo, dump.matrix.normalization.lo);
  EXPECT_EQ(WriteDump(dir / "b", back), fp);
}

TEST(Dump, CorruptionIsDetected) {
  TempDir dir;
  RatingDataset ds;
  ds.events = {{"1", "1", 1.0, {}}, {"2", "1", 5.0, {}}};
  DatasetDump dump;
  dump.matrix = BuildMatrix(ds, NormalizationScheme::kMinMax);
  dump.groups = GroupAssignment::FromLabels({0, 1}, Attribute::kGender);
  dump.split.train = dump.matrix.mask;
  dump.split.val = MaskMatrix::Zero(1, 2);
  dump.split.test = MaskMatrix::Zero(1, 2);
  WriteDump(dir.path(), dump);
  std::string bytes = ReadFile(dir / "triplets.bin");
  WriteText(dir / "triplets.bin", bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(ReadDump(dir.path()), Error);
}

TEST(IdLess, NumericBeforeLexicographic) {
  EXPECT_TRUE(IdLess("2", "10"));
  EXPECT_FALSE(IdLess("10", "2"));
  EXPECT_TRUE(IdLess("10", "a"));
  EXPECT_TRUE(IdLess("ab", "b"));
}

TEST(Synthetic, PlantedGroupsAndBounds) {
  SyntheticConfig cfg;
  cfg.users = 50;
  cfg.items = 80;
  RatingDataset ds = GeneratePlantedBias(cfg);
  std::map<std::string, int> per_user;
  for (const auto& e : ds.events) {
    EXPECT_GE(e.rating, 1.0);
    EXPECT_LE(e.rating, 5.0);
    EXPECT_EQ(e.rating, std::round(e.rating));
    ++per_user[e.user_id];
  }
  EXPECT_EQ(per_user.size(), 50u);
  for (const auto& [u, c] : per_user) {
    EXPECT_GE(c, cfg.min_per_user);
    EXPECT_LE(c, cfg.max_per_user);
  }
  int minority = 0;
  for (const auto& [u, meta] : ds.users) minority += *meta.planted_group == 0;
  EXPECT_EQ(minority, 15);

  RatingDataset again = GeneratePlantedBias(cfg);
  ASSERT_EQ(again.events.size(), ds.events.size());
  for (std::size_t k = 0; k < ds.events.size(); ++k) EXPECT_EQ(again.events[k].rating, ds.events[k].rating);
}

TEST(Subsample, KeepsPopularItemsAndSeededUsers) {
  SyntheticConfig cfg;
  cfg.users = 60;
  cfg.items = 50;
  RatingDataset ds = GeneratePlantedBias(cfg);
  RatingDataset sub = Subsample(ds, 20, 30, 5, 7);
  EXPECT_EQ(UserIndex(sub).size(), 20);
  EXPECT_LE(ItemIndex(sub).size(), 30);
  RatingDataset again = Subsample(ds, 20, 30, 5, 7);
  EXPECT_EQ(UserIndex(again).ids(), UserIndex(sub).ids());
}

}  // namespace
}  // namespace fairdiff::data
