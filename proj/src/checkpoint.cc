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

#include "fairdiff/checkpoint.h"

#include <cstdio>
#include <set>
#include <sstream>

#include "fairdiff/binary_io.h"

namespace fairdiff::checkpoint {
namespace {

constexpr const char* kMagic = "fairdiff-checkpoint";
constexpr const char* kPredictionMagic = "fairdiff-predictions";
constexpr const char* kEndHeader = "end_header";

std::string Exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string JoinInts(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int> SplitInts(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error("checkpoint: bad integer list for '" + key + "': " + s);
    }
  }
  return out;
}

int ToInt(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw Error("checkpoint: bad integer for '" + key + "': " + s);
  }
}

std::uint64_t ToU64(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("checkpoint: bad integer for '" + key + "': " + s);
  }
}

double ToDouble(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("checkpoint: bad number for '" + key + "': " + s);
  }
}

// Reads "key value" lines up to end_header. Returns the offset just past it.
std::size_t ParseTextHeader(const std::string& bytes, const std::string& source,
                            const std::string& magic, std::map<std::string, std::string>& kv) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_magic = false;
  while (true) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw ParseError(source, line_no + 1, "missing end_header");
    const std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!saw_magic) {
      const std::string want = magic + " " + std::to_string(kFormatVersion);
      if (line.rfind(magic + " ", 0) != 0) throw ParseError(source, line_no, "not a " + magic + " file");
      if (line != want) throw ParseError(source, line_no, "unsupported version: " + line);
      saw_magic = true;
      continue;
    }
    if (line == kEndHeader) return pos;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) throw ParseError(source, line_no, "malformed header line");
    if (!kv.emplace(line.substr(0, sp), line.substr(sp + 1)).second)
      throw ParseError(source, line_no, "duplicate header key " + line.substr(0, sp));
  }
}

void PutMatrixRowMajor(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) binary::PutF64(out, m(i, j));
}

}  // namespace

const Matrix& Container::Block(const std::string& name) const {
  for (const auto& [n, m] : blocks)
    if (n == name) return m;
  throw Error("checkpoint: missing block '" + name + "'");
}

const std::string& Container::Get(const std::string& key) const {
  auto it = header.find(key);
  if (it == header.end()) throw Error("checkpoint: missing header key '" + key + "'");
  return it->second;
}

std::string Serialize(const Container& c) {
  std::string out = std::string(kMagic) + " " + std::to_string(kFormatVersion) + "\n";
  out += "schema " + c.schema + "\n";
  for (const auto& [k, v] : c.header) {
    if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
      throw Error("checkpoint: header entry '" + k + "' contains whitespace or newline");
    out += k + " " + v + "\n";
  }
  out += std::string(kEndHeader) + "\n";
  binary::PutU32(out, static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& [name, m] : c.blocks) {
    binary::PutU32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    binary::PutU64(out, static_cast<std::uint64_t>(m.rows()));
    binary::PutU64(out, static_cast<std::uint64_t>(m.cols()));
    PutMatrixRowMajor(out, m);
  }
  return out;
}

Container Parse(const std::string& bytes, const std::string& source) {
  Container c;
  std::map<std::string, std::string> kv;
  const std::size_t body = ParseTextHeader(bytes, source, kMagic, kv);
  auto schema = kv.find("schema");
  if (schema == kv.end()) throw ParseError(source, 2, "missing schema tag");
  c.schema = schema->second;
  kv.erase(schema);
  c.header = std::move(kv);

  binary::Reader r(bytes, source);
  r.Seek(body);
  const std::uint32_t count = r.U32();
  std::set<std::string> seen;
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::uint32_t len = r.U32();
    std::string name = r.Bytes(len);
    if (!seen.insert(name).second) throw Error(source + ": duplicate block '" + name + "'");
    const std::uint64_t rows = r.U64();
    const std::uint64_t cols = r.U64();
    if (rows > (1ULL << 32) || cols > (1ULL << 32) ||
        rows * cols * 8 > bytes.size() - r.position())
      throw Error(source + ": block '" + name + "' larger than the file");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.F64();
    c.blocks.emplace_back(std::move(name), std::move(m));
  }
  if (!r.AtEnd()) throw Error(source + ": trailing bytes after last block");
  return c;
}

void Write(const std::filesystem::path& path, const Container& c) {
  WriteFileAtomic(path, Serialize(c));
}

Container Read(const std::filesystem::path& path) { return Parse(ReadFile(path), path.string()); }

Container PackModel(model::NoisePredictor& model, const nn::Adam& optimizer,
                    const ModelState& state) {
  const model::ModelConfig& cfg = model.config();
  Container c;
  c.schema = kModelSchema;
  auto& h = c.header;
  h["m"] = std::to_string(cfg.num_items);
  h["T"] = std::to_string(cfg.num_steps);
  h["time_dim"] = std::to_string(cfg.time_dim);
  h["mlp1"] = JoinInts(cfg.mlp1);
  h["mlp2"] = JoinInts(cfg.mlp2);
  h["mlp3"] = JoinInts(cfg.mlp3);
  h["attention_tokens"] = std::to_string(cfg.tokens);
  h["attention_dim"] = std::to_string(cfg.token_dim);
  h["variant"] = model::ToString(cfg.variant);
  h["init_seed"] = std::to_string(cfg.seed);
  h["variance_scale"] = Exact(state.variance_scale);
  h["beta_min"] = Exact(state.beta_min);
  h["dataset_fingerprint"] = state.dataset_fingerprint.empty() ? "-" : state.dataset_fingerprint;
  h["group_method"] = groups::ToString(state.group_vectors.method);
  h["group_degenerate"] = std::to_string(int{state.group_vectors.degenerate_a}) + "," +
                          std::to_string(int{state.group_vectors.degenerate_b});
  h["epochs_done"] = std::to_string(state.epochs_done);
  h["adam_step"] = std::to_string(optimizer.step());

  for (nn::Param* p : model.Params()) c.blocks.emplace_back(p->name, p->value);
  for (const auto& [name, mom] : optimizer.moments()) {
    c.blocks.emplace_back("adam.m/" + name, mom.m);
    c.blocks.emplace_back("adam.v/" + name, mom.v);
  }
  c.blocks.emplace_back("group.a", state.group_vectors.a);
  c.blocks.emplace_back("group.b", state.group_vectors.b);
  Matrix loss(1, static_cast<Eigen::Index>(state.loss_history.size()));
  for (std::size_t e = 0; e < state.loss_history.size(); ++e) loss(0, e) = state.loss_history[e];
  c.blocks.emplace_back("loss_history", loss);
  return c;
}

model::NoisePredictor UnpackModel(const Container& c, ModelState& state, nn::Adam* optimizer) {
  if (c.schema != kModelSchema)
    throw Error("checkpoint: expected schema " + std::string(kModelSchema) + ", found " + c.schema);
  model::ModelConfig cfg;
  cfg.num_items = ToInt(c.Get("m"), "m");
  cfg.num_steps = ToInt(c.Get("T"), "T");
  cfg.time_dim = ToInt(c.Get("time_dim"), "time_dim");
  cfg.mlp1 = SplitInts(c.Get("mlp1"), "mlp1");
  cfg.mlp2 = SplitInts(c.Get("mlp2"), "mlp2");
  cfg.mlp3 = SplitInts(c.Get("mlp3"), "mlp3");
  cfg.tokens = ToInt(c.Get("attention_tokens"), "attention_tokens");
  cfg.token_dim = ToInt(c.Get("attention_dim"), "attention_dim");
  cfg.variant = model::ParseVariant(c.Get("variant"));
  cfg.seed = ToU64(c.Get("init_seed"), "init_seed");

  model::NoisePredictor net(cfg);
  for (nn::Param* p : net.Params()) {
    const Matrix& v = c.Block(p->name);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw ShapeError("checkpoint: block '" + p->name + "' has shape " +
                       std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + ", expected " +
                       std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = v;
  }

  state.config = cfg;
  state.variance_scale = ToDouble(c.Get("variance_scale"), "variance_scale");
  state.beta_min = ToDouble(c.Get("beta_min"), "beta_min");
  state.dataset_fingerprint = c.Get("dataset_fingerprint");
  if (state.dataset_fingerprint == "-") state.dataset_fingerprint.clear();
  state.epochs_done = ToInt(c.Get("epochs_done"), "epochs_done");
  state.group_vectors.method = groups::ParseGroupVectorMethod(c.Get("group_method"));
  const std::vector<int> degenerate = SplitInts(c.Get("group_degenerate"), "group_degenerate");
  if (degenerate.size() != 2) throw Error("checkpoint: group_degenerate needs two flags");
  state.group_vectors.degenerate_a = degenerate[0] != 0;
  state.group_vectors.degenerate_b = degenerate[1] != 0;
  state.group_vectors.a = c.Block("group.a").col(0);
  state.group_vectors.b = c.Block("group.b").col(0);
  const Matrix& loss = c.Block("loss_history");
  state.loss_history.assign(loss.data(), loss.data() + loss.size());

  if (optimizer) {
    std::map<std::string, nn::Adam::Moments> moments;
    for (const auto& [name, m] : c.blocks) {
      if (name.rfind("adam.m/", 0) != 0) continue;
      const std::string param = name.substr(7);
      moments[param] = {m, c.Block("adam.v/" + param)};
    }
    optimizer->Restore(ToInt(c.Get("adam_step"), "adam_step"), std::move(moments));
  }
  return net;
}

Container PackMf(const MfState& state) {
  Container c;
  c.schema = kMfSchema;
  c.header["factors"] = std::to_string(state.params.users.cols());
  c.header["m"] = std::to_string(state.params.items.rows());
  c.header["n"] = std::to_string(state.params.users.rows());
  c.header["lambda"] = Exact(state.params.lambda);
  c.header["dataset_fingerprint"] =
      state.dataset_fingerprint.empty() ? "-" : state.dataset_fingerprint;
  c.blocks.emplace_back("mf.users", state.params.users);
  c.blocks.emplace_back("mf.items", state.params.items);
  return c;
}

MfState UnpackMf(const Container& c) {
  if (c.schema != kMfSchema)
    throw Error("checkpoint: expected schema " + std::string(kMfSchema) + ", found " + c.schema);
  MfState s;
  s.params.users = c.Block("mf.users");
  s.params.items = c.Block("mf.items");
  s.params.lambda = ToDouble(c.Get("lambda"), "lambda");
  s.dataset_fingerprint = c.Get("dataset_fingerprint");
  if (s.dataset_fingerprint == "-") s.dataset_fingerprint.clear();
  if (s.params.users.rows() != ToInt(c.Get("n"), "n") ||
      s.params.items.rows() != ToInt(c.Get("m"), "m") ||
      s.params.users.cols() != s.params.items.cols())
    throw ShapeError("checkpoint: mf factor shapes disagree with header");
  return s;
}

std::string SerializePredictions(const PredictionFile& p) {
  std::string out = std::string(kPredictionMagic) + " " + std::to_string(kFormatVersion) + "\n";
  out += "m " + std::to_string(p.ratings.rows()) + "\n";
  out += "n " + std::to_string(p.ratings.cols()) + "\n";
  out += "normalization " + data::ToString(p.normalization.scheme) + "\n";
  out += "scale_lo " + Exact(p.normalization.lo) + "\n";
  out += "scale_hi " + Exact(p.normalization.hi) + "\n";
  out += "fingerprint " + (p.fingerprint.empty() ? std::string("-") : p.fingerprint) + "\n";
  out += std::string(kEndHeader) + "\n";
  PutMatrixRowMajor(out, p.ratings);
  return out;
}

PredictionFile ParsePredictions(const std::string& bytes, const std::string& source) {
  std::map<std::string, std::string> kv;
  const std::size_t body = ParseTextHeader(bytes, source, kPredictionMagic, kv);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(source + ": missing header key '" + key + "'");
    return it->second;
  };
  PredictionFile p;
  const int m = ToInt(get("m"), "m");
  const int n = ToInt(get("n"), "n");
  if (m < 0 || n < 0) throw Error(source + ": negative dimensions");
  p.normalization.scheme = data::ParseNormalizationScheme(get("normalization"));
  p.normalization.lo = ToDouble(get("scale_lo"), "scale_lo");
  p.normalization.hi = ToDouble(get("scale_hi"), "scale_hi");
  p.fingerprint = get("fingerprint");
  if (p.fingerprint == "-") p.fingerprint.clear();
  if (bytes.size() - body != static_cast<std::size_t>(m) * n * 8)
    throw Error(source + ": payload size does not match m x n");
  binary::Reader r(bytes, source);
  r.Seek(body);
  p.ratings.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) p.ratings(i, j) = r.F64();
  return p;
}

}  // namespace fairdiff::checkpoint
