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

// Dataset ingestion: raw file parsers, sensitive-attribute grouping, the dense
// item-by-user interaction matrix and per-user train/val/test splits.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairdiff/common.h"

namespace fairdiff::data {

struct RatingEvent {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

// Per-user side information used for grouping. Fields are unset when the
// source dataset does not provide them.
struct UserMeta {
  std::optional<char> gender;
  std::optional<int> age;
  std::optional<double> total_plays;
  std::optional<int> distinct_tags;
  // Planted group label of generated datasets (0 = A, 1 = B).
  std::optional<int> planted_group;
};

enum class DatasetKind { kMovieLens, kLastFm, kSynthetic };

struct RatingDataset {
  DatasetKind kind = DatasetKind::kMovieLens;
  // Unique (user, item) pairs, sorted by (user, item).
  std::vector<RatingEvent> events;
  std::map<std::string, UserMeta> users;
};

// Orders ids numerically when they are plain non-negative integers and
// lexicographically otherwise.
bool IdLess(const std::string& a, const std::string& b);

// Bidirectional id <-> dense index map.
class IdIndex {
 public:
  IdIndex() = default;
  explicit IdIndex(std::vector<std::string> sorted_ids);

  int size() const { return static_cast<int>(ids_.size()); }
  const std::string& id(int index) const { return ids_.at(index); }
  const std::vector<std::string>& ids() const { return ids_; }
  // -1 when absent.
  int Find(const std::string& id) const;

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, int> index_;
};

enum class NormalizationScheme { kMinMax, kLog1pMinMax };

std::string ToString(NormalizationScheme scheme);
NormalizationScheme ParseNormalizationScheme(const std::string& name);

// Maps raw ratings onto [-1, 1]. For kLog1pMinMax, lo/hi are in log1p space.
struct Normalization {
  NormalizationScheme scheme = NormalizationScheme::kMinMax;
  double lo = 0.0;
  double hi = 0.0;

  double Normalize(double rating) const;
  double Denormalize(double value) const;
};

struct InteractionMatrix {
  Matrix ratings;   // m items x n users, normalized; 0 where unobserved
  MaskMatrix mask;  // 1 exactly where a rating was observed
  IdIndex items;
  IdIndex users;
  Normalization normalization;

  int num_items() const { return static_cast<int>(ratings.rows()); }
  int num_users() const { return static_cast<int>(ratings.cols()); }
};

enum class Attribute { kGender, kAge, kActivityLevel, kInterestDiversity, kPlanted };

std::string ToString(Attribute attribute);
Attribute ParseAttribute(const std::string& name);

struct GroupThresholds {
  int age = 50;
  double plays = 15000.0;
  int tags = 300;
};

// Binary partition of the users (matrix columns). s[j] = 0 puts user j in A.
// A is female / young / inactive / focused; B is the complementary group.
struct GroupAssignment {
  std::vector<std::uint8_t> s;
  Attribute attribute = Attribute::kGender;
  std::vector<int> group_a;
  std::vector<int> group_b;

  static GroupAssignment FromLabels(std::vector<std::uint8_t> labels, Attribute attribute);
  // The smaller of the two groups (A on ties).
  int MinorityLabel() const;
};

struct DatasetSplit {
  MaskMatrix train;
  MaskMatrix val;
  MaskMatrix test;
  // Users with too few interactions; none of their cells are assigned.
  std::vector<int> dropped_users;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Parses ratings.dat / users.dat of MovieLens-1M ("::"-delimited, no header).
// Duplicate (user, item) pairs keep the event with the latest timestamp.
RatingDataset ParseMovieLens(const std::filesystem::path& ratings_path,
                             const std::filesystem::path& users_path);

// Parses user_artists.dat and, when given, user_taggedartists.dat of the
// HetRec LastFM release (tab-delimited with a header row). Play counts
// become ratings; duplicate pairs are summed.
RatingDataset ParseLastFm(const std::filesystem::path& user_artists_path,
                          const std::optional<std::filesystem::path>& user_tags_path);

// Sorts events by (user, item, timestamp) and collapses duplicate pairs with
// the rule of the dataset kind.
void Aggregate(RatingDataset& dataset);

// Removes users with fewer than min_interactions events. Returns the number
// of users removed.
int DropSparseUsers(RatingDataset& dataset, int min_interactions);

// Keeps the max_items most-rated items, then a seeded random sample of
// max_users users among those with at least min_interactions ratings on them.
RatingDataset Subsample(const RatingDataset& dataset, int max_users, int max_items,
                        int min_interactions, std::uint64_t seed);

// Ids in sorted order, as used for the matrix columns / rows.
IdIndex UserIndex(const RatingDataset& dataset);
IdIndex ItemIndex(const RatingDataset& dataset);

GroupAssignment AssignGroups(const RatingDataset& dataset, const IdIndex& users,
                             Attribute attribute, const GroupThresholds& thresholds = {});

// The min/max scale is fitted on the cells of fit_mask when given (normally
// the train split), otherwise on every observed rating.
InteractionMatrix BuildMatrix(const RatingDataset& dataset, NormalizationScheme scheme,
                              const MaskMatrix* fit_mask = nullptr);

// Per-user seeded partition of the observed cells.
DatasetSplit Split(const InteractionMatrix& matrix, const SplitRatios& ratios,
                   int min_train, std::uint64_t seed);

// Drops the given users (matrix columns) and returns the reduced assignment
// alongside. Used for minority under-sampling.
struct Subset {
  InteractionMatrix matrix;
  DatasetSplit split;
  GroupAssignment groups;
};
Subset SelectUsers(const InteractionMatrix& matrix, const DatasetSplit& split,
                   const GroupAssignment& groups, const std::vector<int>& keep_users);

// Canonical on-disk dataset: header.txt, users.tsv, items.tsv, triplets.bin,
// split.bin. See README for the layout.
struct DatasetDump {
  InteractionMatrix matrix;
  DatasetSplit split;
  GroupAssignment groups;
  DatasetKind kind = DatasetKind::kMovieLens;
};

// Returns the fingerprint of the written dump.
std::string WriteDump(const std::filesystem::path& dir, const DatasetDump& dump);
DatasetDump ReadDump(const std::filesystem::path& dir);
std::string DumpFingerprint(const std::filesystem::path& dir);

std::string ToString(DatasetKind kind);
DatasetKind ParseDatasetKind(const std::string& name);

}  // namespace fairdiff::data
