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

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

namespace fairdiff::config {
namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long long ParseInt(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected an integer, got '" + v + "'");
}

int ParseInt32(const std::string& key, const std::string& v) {
  const long long x = ParseInt(key, v);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

std::uint64_t ParseU64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long x = std::stoull(v, &used);
      if (used == v.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

double ParseDouble(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a finite number, got '" + v + "'");
}

std::vector<std::string> SplitList(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(Trim(part));
  return out;
}

std::vector<int> ParseIntList(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const std::string& p : SplitList(v)) out.push_back(ParseInt32(key, p));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<double> ParseDoubleList(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const std::string& p : SplitList(v)) out.push_back(ParseDouble(key, p));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <typename T>
std::string JoinList(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += Num(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

// Converts a parse failure of an enum into a ConfigError naming the key.
template <typename F>
auto Named(const std::string& key, F&& parse) {
  try {
    return parse();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FD_INT(KEY, FIELD)                                                            \
  Key {                                                                               \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = ParseInt32(KEY, v); },   \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                    \
  }
#define FD_DOUBLE(KEY, FIELD)                                                         \
  Key {                                                                               \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = ParseDouble(KEY, v); },  \
        [](const RunConfig& c) { return Num(c.FIELD); }                               \
  }
#define FD_STRING(KEY, FIELD)                                                         \
  Key {                                                                               \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = v; },                     \
        [](const RunConfig& c) { return c.FIELD; }                                    \
  }
#define FD_INTS(KEY, FIELD)                                                           \
  Key {                                                                               \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = ParseIntList(KEY, v); }, \
        [](const RunConfig& c) { return JoinList(c.FIELD); }                          \
  }
#define FD_DOUBLES(KEY, FIELD)                                                           \
  Key {                                                                                  \
    KEY, [](RunConfig& c, const std::string& v) { c.FIELD = ParseDoubleList(KEY, v); }, \
        [](const RunConfig& c) { return JoinList(c.FIELD); }                             \
  }

const std::vector<Key>& Keys() {
  static const std::vector<Key> keys = {
      Key{"dataset.kind",
          [](RunConfig& c, const std::string& v) {
            c.dataset = Named("dataset.kind", [&] { return data::ParseDatasetKind(v); });
          },
          [](const RunConfig& c) { return data::ToString(c.dataset); }},
      FD_STRING("dataset.ratings_path", ratings_path),
      FD_STRING("dataset.users_path", users_path),
      FD_STRING("dataset.user_artists_path", user_artists_path),
      FD_STRING("dataset.tags_path", tags_path),
      FD_INT("dataset.max_users", max_users),
      FD_INT("dataset.max_items", max_items),
      FD_INT("synthetic.users", synthetic.users),
      FD_INT("synthetic.items", synthetic.items),
      FD_DOUBLE("synthetic.minority_fraction", synthetic.minority_fraction),
      FD_DOUBLE("synthetic.preference_shift", synthetic.preference_shift),
      FD_INT("synthetic.latent_dim", synthetic.latent_dim),
      FD_INT("synthetic.min_per_user", synthetic.min_per_user),
      FD_INT("synthetic.max_per_user", synthetic.max_per_user),
      FD_DOUBLE("synthetic.rating_noise", synthetic.rating_noise),
      FD_DOUBLE("synthetic.selection_temperature", synthetic.selection_temperature),
      Key{"attribute",
          [](RunConfig& c, const std::string& v) {
            c.attribute = Named("attribute", [&] { return data::ParseAttribute(v); });
          },
          [](const RunConfig& c) { return data::ToString(c.attribute); }},
      FD_INT("groups.age_threshold", thresholds.age),
      FD_DOUBLE("groups.plays_threshold", thresholds.plays),
      FD_INT("groups.tags_threshold", thresholds.tags),
      Key{"group_method",
          [](RunConfig& c, const std::string& v) {
            c.group_method =
                Named("group_method", [&] { return groups::ParseGroupVectorMethod(v); });
          },
          [](const RunConfig& c) { return groups::ToString(c.group_method); }},
      FD_DOUBLE("split.train", split.train),
      FD_DOUBLE("split.val", split.val),
      FD_DOUBLE("split.test", split.test),
      FD_INT("split.min_train", min_train),
      FD_INT("diffusion.steps", steps),
      FD_DOUBLE("diffusion.scale", scale),
      FD_DOUBLE("diffusion.beta_min", beta_min),
      FD_INT("model.time_dim", time_dim),
      FD_INTS("model.mlp1", mlp1),
      FD_INTS("model.mlp2", mlp2),
      FD_INTS("model.mlp3", mlp3),
      Key{"model.variant",
          [](RunConfig& c, const std::string& v) {
            c.variant = Named("model.variant", [&] { return model::ParseVariant(v); });
          },
          [](const RunConfig& c) { return model::ToString(c.variant); }},
      FD_INT("attention.tokens", tokens),
      FD_INT("attention.token_dim", token_dim),
      FD_INT("train.batch_size", batch_size),
      FD_INT("train.epochs", epochs),
      FD_DOUBLE("train.lr", lr),
      FD_INT("predict.t_start", t_start),
      FD_INT("predict.ensemble", ensemble),
      FD_INT("predict.threads", threads),
      FD_INT("eval.k", k),
      FD_INT("mf.factors", mf.factors),
      FD_DOUBLE("mf.lambda", mf.lambda),
      FD_DOUBLE("mf.lr", mf.lr),
      FD_INT("mf.batch_size", mf.batch_size),
      FD_INT("mf.epochs", mf.epochs),
      FD_DOUBLE("mf.init_scale", mf.init_scale),
      FD_STRING("sweep.param", sweep_param),
      FD_DOUBLES("sweep.values", sweep_values),
      FD_DOUBLES("sparsity.ratios", sparsity_ratios),
      Key{"seed", [](RunConfig& c, const std::string& v) { c.seed = ParseU64("seed", v); },
          [](const RunConfig& c) { return std::to_string(c.seed); }},
      FD_STRING("out_dir", out_dir),
  };
  return keys;
}

#undef FD_INT
#undef FD_DOUBLE
#undef FD_STRING
#undef FD_INTS
#undef FD_DOUBLES

void Require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

Entries ParseText(const std::string& text, const std::string& source) {
  Entries out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected 'key = value'");
    const std::string key = Trim(t.substr(0, eq));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    out.emplace_back(key, Trim(t.substr(eq + 1)));
  }
  return out;
}

Entries ParseFile(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return ParseText(ReadFile(path), path.string());
}

Entries ParseOverrides(const std::vector<std::string>& overrides) {
  Entries out;
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override '" + o + "' is not of the form key=value");
    out.emplace_back(Trim(o.substr(0, eq)), Trim(o.substr(eq + 1)));
  }
  return out;
}

void Apply(RunConfig& config, const Entries& entries) {
  for (const auto& [key, value] : entries) {
    bool found = false;
    for (const Key& k : Keys()) {
      if (key != k.name) continue;
      k.set(config, value);
      found = true;
      break;
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

void Validate(const RunConfig& c) {
  using data::DatasetKind;
  if (c.dataset == DatasetKind::kMovieLens) {
    Require(!c.ratings_path.empty(), "dataset.ratings_path is required for movielens");
    Require(!c.users_path.empty(), "dataset.users_path is required for movielens");
  }
  if (c.dataset == DatasetKind::kLastFm) {
    Require(!c.user_artists_path.empty(), "dataset.user_artists_path is required for lastfm");
    Require(c.attribute != data::Attribute::kInterestDiversity || !c.tags_path.empty(),
            "attribute interest_diversity needs dataset.tags_path");
  }
  const bool lastfm_attr = c.attribute == data::Attribute::kActivityLevel ||
                           c.attribute == data::Attribute::kInterestDiversity;
  const bool ml_attr =
      c.attribute == data::Attribute::kGender || c.attribute == data::Attribute::kAge;
  Require(c.dataset != DatasetKind::kSynthetic || c.attribute == data::Attribute::kPlanted,
          "synthetic datasets only carry the 'planted' attribute");
  Require(c.dataset != DatasetKind::kMovieLens || ml_attr,
          "movielens supports attribute gender or age");
  Require(c.dataset != DatasetKind::kLastFm || lastfm_attr,
          "lastfm supports attribute activity_level or interest_diversity");
  Require(c.max_users >= 0 && c.max_items >= 0, "dataset.max_users/max_items must be >= 0");

  const auto& s = c.synthetic;
  Require(s.users >= 4, "synthetic.users must be >= 4");
  Require(s.items >= 2, "synthetic.items must be >= 2");
  Require(s.minority_fraction > 0.0 && s.minority_fraction < 1.0,
          "synthetic.minority_fraction must be in (0, 1)");
  Require(s.preference_shift >= 0.0, "synthetic.preference_shift must be >= 0");
  Require(s.latent_dim >= 1, "synthetic.latent_dim must be >= 1");
  Require(s.min_per_user >= 1 && s.min_per_user <= s.max_per_user && s.max_per_user <= s.items,
          "synthetic: need 1 <= min_per_user <= max_per_user <= items");
  Require(s.rating_noise >= 0.0, "synthetic.rating_noise must be >= 0");
  Require(s.selection_temperature >= 0.0, "synthetic.selection_temperature must be >= 0");

  Require(c.thresholds.age > 0 && c.thresholds.plays > 0 && c.thresholds.tags > 0,
          "groups thresholds must be positive");

  Require(c.split.train > 0 && c.split.val >= 0 && c.split.test > 0,
          "split ratios must be positive (val may be 0)");
  Require(std::abs(c.split.train + c.split.val + c.split.test - 1.0) < 1e-9,
          "split.train + split.val + split.test must equal 1");
  Require(c.min_train >= 1, "split.min_train must be >= 1");

  Require(c.steps >= 1 && c.steps <= 100000, "diffusion.steps must be in [1, 100000]");
  Require(c.scale > 0.0 && c.scale < 1.0, "diffusion.scale must be in (0, 1)");
  Require(c.beta_min >= 0.0 && c.beta_min < 1.0, "diffusion.beta_min must be in [0, 1)");
  Require(c.scale + c.beta_min < 1.0, "diffusion.scale + diffusion.beta_min must be < 1");
  Require(c.time_dim >= 1, "model.time_dim must be >= 1");
  for (const auto* list : {&c.mlp1, &c.mlp2, &c.mlp3})
    for (int w : *list) Require(w >= 1 && w <= 65536, "model widths must be in [1, 65536]");
  Require(c.tokens >= 1 && c.token_dim >= 1, "attention.tokens and token_dim must be >= 1");

  Require(c.batch_size >= 1, "train.batch_size must be >= 1");
  Require(c.epochs >= 1, "train.epochs must be >= 1");
  Require(c.lr > 0.0 && c.lr < 1.0, "train.lr must be in (0, 1)");

  Require(c.t_start >= 0 && c.t_start <= c.steps, "predict.t_start must be in [0, diffusion.steps]");
  Require(c.ensemble >= 1 && c.ensemble <= 1024, "predict.ensemble must be in [1, 1024]");
  Require(c.threads >= 1 && c.threads <= 256, "predict.threads must be in [1, 256]");
  Require(c.k >= 0 && c.k <= 1000, "eval.k must be in [0, 1000]");

  Require(c.mf.factors >= 1, "mf.factors must be >= 1");
  Require(c.mf.lambda >= 0.0, "mf.lambda must be >= 0");
  Require(c.mf.lr > 0.0 && c.mf.lr < 1.0, "mf.lr must be in (0, 1)");
  Require(c.mf.batch_size >= 1, "mf.batch_size must be >= 1");
  Require(c.mf.epochs >= 1, "mf.epochs must be >= 1");
  Require(c.mf.init_scale > 0.0, "mf.init_scale must be > 0");

  Require(c.sweep_param == "T" || c.sweep_param == "L", "sweep.param must be T or L");
  for (double v : c.sweep_values) {
    if (c.sweep_param == "T")
      Require(v >= 1 && v <= 100000 && v == std::floor(v), "sweep.values for T must be integers >= 1");
    else
      Require(v > 0 && v + c.beta_min < 1.0, "sweep.values for L must be in (0, 1 - beta_min)");
  }
  for (double r : c.sparsity_ratios)
    Require(r >= 0.0 && r < 1.0, "sparsity.ratios must be in [0, 1)");
  Require(!c.out_dir.empty(), "out_dir must not be empty");
}

Entries Canonical(const RunConfig& config) {
  Entries out;
  for (const Key& k : Keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

std::string ToText(const RunConfig& config) {
  std::string out;
  for (const auto& [k, v] : Canonical(config)) out += k + " = " + v + "\n";
  return out;
}

std::string Hash(const RunConfig& config) {
  std::string text;
  for (const auto& [k, v] : Canonical(config)) {
    if (k == "out_dir" || k == "predict.threads") continue;
    text += k + "=" + v + "\n";
  }
  return HexDigest(Fnv1a(text));
}

int EffectiveK(const RunConfig& config) {
  if (config.k > 0) return config.k;
  return config.dataset == data::DatasetKind::kLastFm ? 10 : 7;
}

model::ModelConfig ToModelConfig(const RunConfig& c, int num_items) {
  model::ModelConfig m;
  m.num_items = num_items;
  m.num_steps = c.steps;
  m.time_dim = c.time_dim;
  m.mlp1 = c.mlp1;
  m.mlp2 = c.mlp2;
  m.mlp3 = c.mlp3;
  m.tokens = c.tokens;
  m.token_dim = c.token_dim;
  m.variant = c.variant;
  m.seed = c.seed;
  return m;
}

diffusion::TrainConfig ToTrainConfig(const RunConfig& c) {
  diffusion::TrainConfig t;
  t.batch_size = c.batch_size;
  t.epochs = c.epochs;
  t.seed = c.seed;
  return t;
}

diffusion::PredictOptions ToPredictOptions(const RunConfig& c) {
  diffusion::PredictOptions p;
  p.n_samples = c.ensemble;
  p.seed = c.seed;
  p.t_start = c.t_start;
  p.threads = c.threads;
  return p;
}

}  // namespace fairdiff::config
