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
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fairdiff/binary_io.h"

namespace fairdiff::data {
namespace {

constexpr int kDumpVersion = 1;

std::vector<std::string_view> SplitOn(std::string_view line, std::string_view sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + sep.size();
  }
}

std::string_view StripCr(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  return line;
}

template <typename T>
std::optional<T> ParseNumber(std::string_view text) {
  T value{};
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return value;
}

std::ifstream OpenInput(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

bool IsPlainInteger(const std::string& s) {
  if (s.empty() || s.size() > 18) return false;
  if (s.size() > 1 && s[0] == '0') return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

bool IdLess(const std::string& a, const std::string& b) {
  bool ia = IsPlainInteger(a);
  bool ib = IsPlainInteger(b);
  if (ia && ib) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }
  if (ia != ib) return ia;  // integers first
  return a < b;
}

IdIndex::IdIndex(std::vector<std::string> sorted_ids) : ids_(std::move(sorted_ids)) {
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], static_cast<int>(i)).second)
      throw Error("duplicate id in index: " + ids_[i]);
  }
}

int IdIndex::Find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? -1 : it->second;
}

std::string ToString(NormalizationScheme scheme) {
  return scheme == NormalizationScheme::kMinMax ? "minmax" : "log1p_minmax";
}

NormalizationScheme ParseNormalizationScheme(const std::string& name) {
  if (name == "minmax") return NormalizationScheme::kMinMax;
  if (name == "log1p_minmax") return NormalizationScheme::kLog1pMinMax;
  throw ConfigError("unknown normalization scheme: " + name);
}

double Normalization::Normalize(double rating) const {
  double x = scheme == NormalizationScheme::kLog1pMinMax ? std::log1p(rating) : rating;
  if (hi == lo) return 0.0;
  return 2.0 * (x - lo) / (hi - lo) - 1.0;
}

double Normalization::Denormalize(double value) const {
  double x = lo + 0.5 * (value + 1.0) * (hi - lo);
  return scheme == NormalizationScheme::kLog1pMinMax ? std::expm1(x) : x;
}

std::string ToString(Attribute attribute) {
  switch (attribute) {
    case Attribute::kGender: return "gender";
    case Attribute::kAge: return "age";
    case Attribute::kActivityLevel: return "activity_level";
    case Attribute::kInterestDiversity: return "interest_diversity";
    case Attribute::kPlanted: return "planted";
  }
  return "?";
}

Attribute ParseAttribute(const std::string& name) {
  if (name == "gender") return Attribute::kGender;
  if (name == "age") return Attribute::kAge;
  if (name == "activity_level") return Attribute::kActivityLevel;
  if (name == "interest_diversity") return Attribute::kInterestDiversity;
  if (name == "planted") return Attribute::kPlanted;
  throw ConfigError("unknown attribute: " + name);
}

std::string ToString(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kMovieLens: return "movielens";
    case DatasetKind::kLastFm: return "lastfm";
    case DatasetKind::kSynthetic: return "synthetic";
  }
  return "?";
}

DatasetKind ParseDatasetKind(const std::string& name) {
  if (name == "movielens") return DatasetKind::kMovieLens;
  if (name == "lastfm") return DatasetKind::kLastFm;
  if (name == "synthetic") return DatasetKind::kSynthetic;
  throw ConfigError("unknown dataset kind: " + name);
}

GroupAssignment GroupAssignment::FromLabels(std::vector<std::uint8_t> labels,
                                            Attribute attribute) {
  GroupAssignment g;
  g.attribute = attribute;
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] > 1) throw Error("group label must be 0 or 1");
    (labels[j] == 0 ? g.group_a : g.group_b).push_back(static_cast<int>(j));
  }
  g.s = std::move(labels);
  return g;
}

int GroupAssignment::MinorityLabel() const {
  return group_a.size() <= group_b.size() ? 0 : 1;
}

RatingDataset ParseMovieLens(const std::filesystem::path& ratings_path,
                             const std::filesystem::path& users_path) {
  RatingDataset ds;
  ds.kind = DatasetKind::kMovieLens;

  {
    auto in = OpenInput(users_path);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string_view line = StripCr(raw);
      if (line.empty()) continue;
      auto f = SplitOn(line, "::");
      if (f.size() != 5) throw ParseError(users_path.string(), line_no, "expected 5 '::' fields");
      auto age = ParseNumber<int>(f[2]);
      if (f[0].empty() || f[1].size() != 1 || !age)
        throw ParseError(users_path.string(), line_no, "malformed user record");
      UserMeta meta;
      meta.gender = f[1][0];
      meta.age = *age;
      ds.users[std::string(f[0])] = meta;
    }
    if (ds.users.empty()) throw ParseError(users_path.string(), 0, "empty users file");
  }

  auto in = OpenInput(ratings_path);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = StripCr(raw);
    if (line.empty()) continue;
    auto f = SplitOn(line, "::");
    if (f.size() != 4) throw ParseError(ratings_path.string(), line_no, "expected 4 '::' fields");
    auto rating = ParseNumber<double>(f[2]);
    auto ts = ParseNumber<std::int64_t>(f[3]);
    if (f[0].empty() || f[1].empty() || !rating || !ts)
      throw ParseError(ratings_path.string(), line_no, "malformed rating record");
    if (*rating < 0) throw ParseError(ratings_path.string(), line_no, "negative rating");
    std::string user(f[0]);
    if (!ds.users.contains(user))
      throw ParseError(ratings_path.string(), line_no, "unknown user " + user);
    ds.events.push_back({std::move(user), std::string(f[1]), *rating, *ts});
  }
  if (ds.events.empty()) throw ParseError(ratings_path.string(), 0, "empty ratings file");
  Aggregate(ds);
  return ds;
}

RatingDataset ParseLastFm(const std::filesystem::path& user_artists_path,
                          const std::optional<std::filesystem::path>& user_tags_path) {
  RatingDataset ds;
  ds.kind = DatasetKind::kLastFm;

  auto in = OpenInput(user_artists_path);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (line_no == 1) continue;  // header
    std::string_view line = StripCr(raw);
    if (line.empty()) continue;
    auto f = SplitOn(line, "\t");
    if (f.size() < 3) throw ParseError(user_artists_path.string(), line_no, "expected 3 tab fields");
    auto weight = ParseNumber<double>(f[2]);
    if (!weight) throw ParseError(user_artists_path.string(), line_no, "non-numeric weight");
    if (*weight < 0) throw ParseError(user_artists_path.string(), line_no, "negative weight");
    if (f[0].empty() || f[1].empty())
      throw ParseError(user_artists_path.string(), line_no, "empty id");
    ds.events.push_back({std::string(f[0]), std::string(f[1]), *weight, std::nullopt});
  }
  if (ds.events.empty()) throw ParseError(user_artists_path.string(), 0, "empty user-artists file");
  Aggregate(ds);

  for (const auto& e : ds.events) {
    auto& meta = ds.users[e.user_id];
    meta.total_plays = meta.total_plays.value_or(0.0) + e.rating;
  }

  if (user_tags_path) {
    // Tags attached to an artist by any user; a user's diversity is the
    // number of distinct tags over the artists they listen to.
    std::unordered_map<std::string, std::set<long>> artist_tags;
    auto tin = OpenInput(*user_tags_path);
    line_no = 0;
    while (std::getline(tin, raw)) {
      ++line_no;
      if (line_no == 1) continue;
      std::string_view line = StripCr(raw);
      if (line.empty()) continue;
      auto f = SplitOn(line, "\t");
      if (f.size() < 3) throw ParseError(user_tags_path->string(), line_no, "expected >= 3 tab fields");
      auto tag = ParseNumber<long>(f[2]);
      if (!tag) throw ParseError(user_tags_path->string(), line_no, "non-numeric tag id");
      artist_tags[std::string(f[1])].insert(*tag);
    }
    std::map<std::string, std::set<long>> user_tags;
    for (const auto& e : ds.events) {
      auto it = artist_tags.find(e.item_id);
      auto& bucket = user_tags[e.user_id];
      if (it != artist_tags.end()) bucket.insert(it->second.begin(), it->second.end());
    }
    for (auto& [user, meta] : ds.users)
      meta.distinct_tags = static_cast<int>(user_tags[user].size());
  }
  return ds;
}

void Aggregate(RatingDataset& ds) {
  auto& ev = ds.events;
  std::stable_sort(ev.begin(), ev.end(), [](const RatingEvent& a, const RatingEvent& b) {
    if (a.user_id != b.user_id) return IdLess(a.user_id, b.user_id);
    if (a.item_id != b.item_id) return IdLess(a.item_id, b.item_id);
    return a.timestamp.value_or(0) < b.timestamp.value_or(0);
  });
  std::vector<RatingEvent> out;
  out.reserve(ev.size());
  for (auto& e : ev) {
    if (!out.empty() && out.back().user_id == e.user_id && out.back().item_id == e.item_id) {
      if (ds.kind == DatasetKind::kLastFm) {
        out.back().rating += e.rating;
      } else {
        out.back() = std::move(e);  // latest timestamp wins
      }
      continue;
    }
    out.push_back(std::move(e));
  }
  ev = std::move(out);
}

int DropSparseUsers(RatingDataset& ds, int min_interactions) {
  std::map<std::string, int> counts;
  for (const auto& e : ds.events) ++counts[e.user_id];
  std::set<std::string> drop;
  for (const auto& [u, c] : counts)
    if (c < min_interactions) drop.insert(u);
  std::erase_if(ds.events, [&](const RatingEvent& e) { return drop.contains(e.user_id); });
  for (const auto& u : drop) ds.users.erase(u);
  // Users present in metadata but without events are not part of the dataset.
  std::erase_if(ds.users, [&](const auto& kv) { return !counts.contains(kv.first); });
  return static_cast<int>(drop.size());
}

RatingDataset Subsample(const RatingDataset& ds, int max_users, int max_items,
                        int min_interactions, std::uint64_t seed) {
  std::map<std::string, int, decltype(&IdLess)> popularity(&IdLess);
  for (const auto& e : ds.events) ++popularity[e.item_id];
  std::vector<std::pair<std::string, int>> items(popularity.begin(), popularity.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> keep_items;
  for (int i = 0; i < std::min<int>(max_items, static_cast<int>(items.size())); ++i)
    keep_items.insert(items[i].first);

  std::map<std::string, int, decltype(&IdLess)> counts(&IdLess);
  for (const auto& e : ds.events)
    if (keep_items.contains(e.item_id)) ++counts[e.user_id];
  std::vector<std::string> eligible;
  for (const auto& [u, c] : counts)
    if (c >= min_interactions) eligible.push_back(u);
  Rng rng(seed, "subsample");
  std::shuffle(eligible.begin(), eligible.end(), rng.engine());
  if (static_cast<int>(eligible.size()) > max_users) eligible.resize(max_users);
  std::set<std::string> keep_users(eligible.begin(), eligible.end());

  RatingDataset out;
  out.kind = ds.kind;
  for (const auto& e : ds.events)
    if (keep_users.contains(e.user_id) && keep_items.contains(e.item_id)) out.events.push_back(e);
  for (const auto& u : keep_users) {
    auto it = ds.users.find(u);
    out.users[u] = it == ds.users.end() ? UserMeta{} : it->second;
  }
  return out;
}

IdIndex UserIndex(const RatingDataset& ds) {
  std::set<std::string, decltype(&IdLess)> ids(&IdLess);
  for (const auto& e : ds.events) ids.insert(e.user_id);
  return IdIndex(std::vector<std::string>(ids.begin(), ids.end()));
}

IdIndex ItemIndex(const RatingDataset& ds) {
  std::set<std::string, decltype(&IdLess)> ids(&IdLess);
  for (const auto& e : ds.events) ids.insert(e.item_id);
  return IdIndex(std::vector<std::string>(ids.begin(), ids.end()));
}

GroupAssignment AssignGroups(const RatingDataset& ds, const IdIndex& users, Attribute attribute,
                             const GroupThresholds& thresholds) {
  std::vector<std::uint8_t> labels(users.size());
  for (int j = 0; j < users.size(); ++j) {
    auto it = ds.users.find(users.id(j));
    if (it == ds.users.end()) throw Error("no metadata for user " + users.id(j));
    const UserMeta& meta = it->second;
    auto missing = [&]() {
      return Error("attribute " + ToString(attribute) + " missing for user " + users.id(j));
    };
    switch (attribute) {
      case Attribute::kGender:
        if (!meta.gender) throw missing();
        if (*meta.gender != 'F' && *meta.gender != 'M')
          throw Error("unexpected gender code for user " + users.id(j));
        labels[j] = *meta.gender == 'F' ? 0 : 1;
        break;
      case Attribute::kAge:
        if (!meta.age) throw missing();
        labels[j] = *meta.age < thresholds.age ? 0 : 1;
        break;
      case Attribute::kActivityLevel:
        if (!meta.total_plays) throw missing();
        labels[j] = *meta.total_plays < thresholds.plays ? 0 : 1;
        break;
      case Attribute::kInterestDiversity:
        if (!meta.distinct_tags) throw missing();
        labels[j] = *meta.distinct_tags < thresholds.tags ? 0 : 1;
        break;
      case Attribute::kPlanted:
        if (!meta.planted_group) throw missing();
        labels[j] = static_cast<std::uint8_t>(*meta.planted_group);
        break;
    }
  }
  auto g = GroupAssignment::FromLabels(std::move(labels), attribute);
  if (g.group_a.empty()) throw Error("group A is empty for attribute " + ToString(attribute));
  if (g.group_b.empty()) throw Error("group B is empty for attribute " + ToString(attribute));
  return g;
}

InteractionMatrix BuildMatrix(const RatingDataset& ds, NormalizationScheme scheme,
                              const MaskMatrix* fit_mask) {
  if (ds.events.empty()) throw Error("cannot build a matrix from an empty dataset");
  InteractionMatrix mat;
  mat.items = ItemIndex(ds);
  mat.users = UserIndex(ds);
  const int m = mat.items.size();
  const int n = mat.users.size();
  if (fit_mask && (fit_mask->rows() != m || fit_mask->cols() != n))
    throw ShapeError("build_matrix: fit mask does not match the dataset");

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& e : ds.events) {
    if (e.rating < 0) throw Error("negative rating for user " + e.user_id);
    if (fit_mask && !(*fit_mask)(mat.items.Find(e.item_id), mat.users.Find(e.user_id))) continue;
    double x = scheme == NormalizationScheme::kLog1pMinMax ? std::log1p(e.rating) : e.rating;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  if (!std::isfinite(lo)) throw Error("build_matrix: no ratings selected to fit the scale");
  mat.normalization = {scheme, lo, hi};
  mat.ratings = Matrix::Zero(m, n);
  mat.mask = MaskMatrix::Zero(m, n);
  for (const auto& e : ds.events) {
    int i = mat.items.Find(e.item_id);
    int j = mat.users.Find(e.user_id);
    if (mat.mask(i, j))
      throw Error("duplicate (user, item) pair: (" + e.user_id + ", " + e.item_id + ")");
    mat.mask(i, j) = 1;
    mat.ratings(i, j) = mat.normalization.Normalize(e.rating);
  }
  return mat;
}

DatasetSplit Split(const InteractionMatrix& matrix, const SplitRatios& ratios, int min_train,
                   std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9 || ratios.train < 0 ||
      ratios.val < 0 || ratios.test < 0)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  const int m = matrix.num_items();
  const int n = matrix.num_users();
  DatasetSplit split;
  split.train = MaskMatrix::Zero(m, n);
  split.val = MaskMatrix::Zero(m, n);
  split.test = MaskMatrix::Zero(m, n);
  const int min_total = min_train + 3;

  for (int j = 0; j < n; ++j) {
    std::vector<int> rows;
    for (int i = 0; i < m; ++i)
      if (matrix.mask(i, j)) rows.push_back(i);
    const int total = static_cast<int>(rows.size());
    if (total < min_total) {
      split.dropped_users.push_back(j);
      continue;
    }
    Rng rng(seed, "split", static_cast<std::uint64_t>(j));
    std::shuffle(rows.begin(), rows.end(), rng.engine());
    int n_val = static_cast<int>(std::floor(total * ratios.val + 1e-9));
    int n_test = static_cast<int>(std::floor(total * ratios.test + 1e-9));
    int n_train = total - n_val - n_test;
    while (n_train < min_train) {
      if (n_val > n_test) {
        --n_val;
      } else {
        --n_test;
      }
      ++n_train;
    }
    for (int r = 0; r < total; ++r) {
      int i = rows[r];
      if (r < n_train) {
        split.train(i, j) = 1;
      } else if (r < n_train + n_val) {
        split.val(i, j) = 1;
      } else {
        split.test(i, j) = 1;
      }
    }
  }
  return split;
}

Subset SelectUsers(const InteractionMatrix& matrix, const DatasetSplit& split,
                   const GroupAssignment& groups, const std::vector<int>& keep_users) {
  std::vector<int> cols = keep_users;
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const int m = matrix.num_items();
  const int n = static_cast<int>(cols.size());
  Subset out;
  out.matrix.items = matrix.items;
  out.matrix.normalization = matrix.normalization;
  out.matrix.ratings.resize(m, n);
  out.matrix.mask.resize(m, n);
  out.split.train.resize(m, n);
  out.split.val.resize(m, n);
  out.split.test.resize(m, n);
  std::vector<std::string> ids;
  std::vector<std::uint8_t> labels;
  for (int c = 0; c < n; ++c) {
    int j = cols[c];
    if (j < 0 || j >= matrix.num_users()) throw ShapeError("user column out of range");
    out.matrix.ratings.col(c) = matrix.ratings.col(j);
    out.matrix.mask.col(c) = matrix.mask.col(j);
    out.split.train.col(c) = split.train.col(j);
    out.split.val.col(c) = split.val.col(j);
    out.split.test.col(c) = split.test.col(j);
    ids.push_back(matrix.users.id(j));
    labels.push_back(groups.s[j]);
  }
  out.matrix.users = IdIndex(std::move(ids));
  out.groups = GroupAssignment::FromLabels(std::move(labels), groups.attribute);
  return out;
}

namespace {

std::string HeaderText(const DatasetDump& d, std::size_t nnz) {
  std::ostringstream h;
  h.precision(17);
  h << "fairdiff-dataset " << kDumpVersion << "\n"
    << "kind " << ToString(d.kind) << "\n"
    << "m " << d.matrix.num_items() << "\n"
    << "n " << d.matrix.num_users() << "\n"
    << "nnz " << nnz << "\n"
    << "normalization " << ToString(d.matrix.normalization.scheme) << "\n"
    << "scale_lo " << d.matrix.normalization.lo << "\n"
    << "scale_hi " << d.matrix.normalization.hi << "\n"
    << "attribute " << ToString(d.groups.attribute) << "\n";
  return h.str();
}

const char* kDumpFiles[] = {"header.txt", "users.tsv", "items.tsv", "triplets.bin", "split.bin"};

}  // namespace

std::string WriteDump(const std::filesystem::path& dir, const DatasetDump& d) {
  std::filesystem::create_directories(dir);
  const auto& mat = d.matrix;
  if (static_cast<int>(d.groups.s.size()) != mat.num_users())
    throw ShapeError("group labels do not match the user count");
  std::string triplets;
  std::string split;
  std::size_t nnz = 0;
  for (int j = 0; j < mat.num_users(); ++j) {
    for (int i = 0; i < mat.num_items(); ++i) {
      if (!mat.mask(i, j)) continue;
      ++nnz;
      binary::PutU32(triplets, static_cast<std::uint32_t>(i));
      binary::PutU32(triplets, static_cast<std::uint32_t>(j));
      binary::PutF64(triplets, mat.ratings(i, j));
      std::uint8_t tag = d.split.train(i, j) ? 0 : d.split.val(i, j) ? 1 : d.split.test(i, j) ? 2 : 3;
      binary::PutU8(split, tag);
    }
  }
  std::string users;
  for (int j = 0; j < mat.num_users(); ++j)
    users += std::to_string(j) + "\t" + mat.users.id(j) + "\t" + std::to_string(d.groups.s[j]) + "\n";
  std::string items;
  for (int i = 0; i < mat.num_items(); ++i)
    items += std::to_string(i) + "\t" + mat.items.id(i) + "\n";
  WriteFileAtomic(dir / "header.txt", HeaderText(d, nnz));
  WriteFileAtomic(dir / "users.tsv", users);
  WriteFileAtomic(dir / "items.tsv", items);
  WriteFileAtomic(dir / "triplets.bin", triplets);
  WriteFileAtomic(dir / "split.bin", split);
  return DumpFingerprint(dir);
}

std::string DumpFingerprint(const std::filesystem::path& dir) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* f : kDumpFiles) h = Fnv1a(ReadFile(dir / f), h);
  return HexDigest(h);
}

DatasetDump ReadDump(const std::filesystem::path& dir) {
  std::map<std::string, std::string> header;
  {
    std::istringstream in(ReadFile(dir / "header.txt"));
    std::string key, value;
    while (in >> key >> value) header[key] = value;
  }
  auto get = [&](const std::string& key) {
    auto it = header.find(key);
    if (it == header.end()) throw Error((dir / "header.txt").string() + ": missing key " + key);
    return it->second;
  };
  if (header["fairdiff-dataset"] != std::to_string(kDumpVersion))
    throw Error((dir / "header.txt").string() + ": unsupported dataset dump version");
  DatasetDump d;
  d.kind = ParseDatasetKind(get("kind"));
  const int m = std::stoi(get("m"));
  const int n = std::stoi(get("n"));
  const std::size_t nnz = std::stoull(get("nnz"));
  d.matrix.normalization = {ParseNormalizationScheme(get("normalization")),
                            std::stod(get("scale_lo")), std::stod(get("scale_hi"))};
  Attribute attribute = ParseAttribute(get("attribute"));

  std::vector<std::string> user_ids, item_ids;
  std::vector<std::uint8_t> labels;
  {
    std::istringstream in(ReadFile(dir / "users.tsv"));
    std::string line;
    while (std::getline(in, line)) {
      auto f = SplitOn(line, "\t");
      if (f.size() != 3) throw ParseError((dir / "users.tsv").string(), user_ids.size() + 1, "bad row");
      user_ids.emplace_back(f[1]);
      labels.push_back(static_cast<std::uint8_t>(std::stoi(std::string(f[2]))));
    }
  }
  {
    std::istringstream in(ReadFile(dir / "items.tsv"));
    std::string line;
    while (std::getline(in, line)) {
      auto f = SplitOn(line, "\t");
      if (f.size() != 2) throw ParseError((dir / "items.tsv").string(), item_ids.size() + 1, "bad row");
      item_ids.emplace_back(f[1]);
    }
  }
  if (static_cast<int>(user_ids.size()) != n || static_cast<int>(item_ids.size()) != m)
    throw Error(dir.string() + ": id maps do not match header dimensions");
  d.matrix.users = IdIndex(std::move(user_ids));
  d.matrix.items = IdIndex(std::move(item_ids));
  d.groups = GroupAssignment::FromLabels(std::move(labels), attribute);

  d.matrix.ratings = Matrix::Zero(m, n);
  d.matrix.mask = MaskMatrix::Zero(m, n);
  d.split.train = MaskMatrix::Zero(m, n);
  d.split.val = MaskMatrix::Zero(m, n);
  d.split.test = MaskMatrix::Zero(m, n);
  std::string trip_bytes = ReadFile(dir / "triplets.bin");
  std::string split_bytes = ReadFile(dir / "split.bin");
  binary::Reader trip(trip_bytes, (dir / "triplets.bin").string());
  binary::Reader sp(split_bytes, (dir / "split.bin").string());
  for (std::size_t k = 0; k < nnz; ++k) {
    std::uint32_t i = trip.U32();
    std::uint32_t j = trip.U32();
    double v = trip.F64();
    if (static_cast<int>(i) >= m || static_cast<int>(j) >= n)
      throw Error(dir.string() + ": triplet index out of range");
    d.matrix.ratings(i, j) = v;
    d.matrix.mask(i, j) = 1;
    switch (sp.U8()) {
      case 0: d.split.train(i, j) = 1; break;
      case 1: d.split.val(i, j) = 1; break;
      case 2: d.split.test(i, j) = 1; break;
      default: break;
    }
  }
  if (!trip.AtEnd() || !sp.AtEnd()) throw Error(dir.string() + ": trailing data in dump");
  return d;
}

}  // namespace fairdiff::data
