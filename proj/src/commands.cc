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

#include "fairdiff/commands.h"

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <sstream>

#include "fairdiff/baseline.h"
#include "fairdiff/checkpoint.h"
#include "fairdiff/diffusion.h"
#include "fairdiff/groups.h"
#include "fairdiff/model.h"
#include "fairdiff/nn.h"
#include "fairdiff/synthetic.h"

namespace fairdiff::commands {
namespace fs = std::filesystem;
using config::RunConfig;

namespace {

std::string NowUtc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string Num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Starts a stage manifest; Finish/Fail rewrite it.
class Stage {
 public:
  Stage(fs::path dir, std::string command, const RunConfig& config) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    m_.command = std::move(command);
    m_.status = "started";
    m_.config_hash = config::Hash(config);
    m_.seed = config.seed;
    m_.started_at = NowUtc();
    m_.Write(dir_);
  }

  void Input(const std::string& name, const std::string& fingerprint) {
    m_.inputs[name] = fingerprint;
    m_.Write(dir_);
  }
  void Artifact(const fs::path& p) { m_.artifacts.push_back(p.filename().string()); }

  void Finish() {
    m_.status = "completed";
    m_.finished_at = NowUtc();
    m_.Write(dir_);
  }
  void Fail(const std::string& error) {
    m_.status = "failed";
    m_.error = error;
    m_.finished_at = NowUtc();
    m_.Write(dir_);
  }

  // Runs body; records failure in the manifest before rethrowing.
  template <typename F>
  auto Guard(F&& body) {
    try {
      return body();
    } catch (const std::exception& e) {
      Fail(e.what());
      throw;
    }
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  RunManifest m_;
};

struct LoadedDataset {
  data::DatasetDump dump;
  std::string fingerprint;
};

LoadedDataset LoadDataset(const fs::path& dir) {
  if (!fs::exists(dir / "header.txt"))
    throw Error("no dataset dump at " + dir.string() + "; run 'ingest' first");
  return {data::ReadDump(dir), data::DumpFingerprint(dir)};
}

diffusion::NoiseSchedule ScheduleFor(const RunConfig& c) {
  return diffusion::BuildSchedule(c.steps, c.scale, c.beta_min);
}

Matrix TrainInput(const data::DatasetDump& d) {
  return groups::ApplyMask(d.matrix.ratings, d.split.train);
}

bool SameModel(const model::ModelConfig& a, const model::ModelConfig& b) {
  return a.num_items == b.num_items && a.num_steps == b.num_steps && a.time_dim == b.time_dim &&
         a.mlp1 == b.mlp1 && a.mlp2 == b.mlp2 && a.mlp3 == b.mlp3 && a.tokens == b.tokens &&
         a.token_dim == b.token_dim && a.variant == b.variant && a.seed == b.seed;
}

std::string LossText(const std::vector<double>& loss) {
  std::string out;
  for (std::size_t e = 0; e < loss.size(); ++e) out += std::to_string(e) + "\t" + Num(loss[e]) + "\n";
  return out;
}

// ---- stages, parameterised by their root directory ----

TrainOutcome TrainStage(const RunConfig& cfg, const LoadedDataset& ds, const fs::path& root,
                        std::ostream& log) {
  Stage stage(root / "train", "train", cfg);
  stage.Input("dataset", ds.fingerprint);
  return stage.Guard([&] {
    const auto& d = ds.dump;
    const Matrix x0 = TrainInput(d);
    groups::GroupVectors gv = groups::BuildGroupVectors(x0, d.groups, cfg.group_method);
    if (gv.degenerate_a || gv.degenerate_b)
      log << "warning: degenerate group covariance; fell back to e1 for group "
          << (gv.degenerate_a ? "A" : "") << (gv.degenerate_b ? "B" : "") << "\n";
    const Matrix targets = groups::CounterfactualTargets(d.groups, gv);
    const auto schedule = ScheduleFor(cfg);
    const model::ModelConfig mcfg = config::ToModelConfig(cfg, d.matrix.num_items());

    const fs::path ckpt_path = stage.dir() / "checkpoint.bin";
    const fs::path loss_path = stage.dir() / "loss.txt";
    nn::Adam adam({cfg.lr, 0.9, 0.999, 1e-8});
    checkpoint::ModelState state;
    TrainOutcome outcome;
    std::optional<model::NoisePredictor> net;
    if (fs::exists(ckpt_path)) {
      net.emplace(checkpoint::UnpackModel(checkpoint::Read(ckpt_path), state, &adam));
      if (state.dataset_fingerprint != ds.fingerprint)
        throw Error("checkpoint " + ckpt_path.string() + " belongs to dataset " +
                    state.dataset_fingerprint + ", current dataset is " + ds.fingerprint);
      if (!SameModel(state.config, mcfg) || state.variance_scale != cfg.scale ||
          state.beta_min != cfg.beta_min || state.group_vectors.method != cfg.group_method)
        throw Error("checkpoint " + ckpt_path.string() +
                    " was trained with different settings; remove it or choose another out_dir");
      outcome.resumed = true;
      log << "resuming from epoch " << state.epochs_done << "\n";
    } else {
      net.emplace(mcfg);
      state.config = mcfg;
      state.dataset_fingerprint = ds.fingerprint;
      state.variance_scale = cfg.scale;
      state.beta_min = cfg.beta_min;
    }
    state.group_vectors = gv;

    diffusion::TrainConfig tc = config::ToTrainConfig(cfg);
    tc.start_epoch = state.epochs_done;
    auto on_epoch = [&](int epoch, double loss) {
      state.loss_history.push_back(loss);
      state.epochs_done = epoch + 1;
      checkpoint::Write(ckpt_path, checkpoint::PackModel(*net, adam, state));
      WriteFileAtomic(loss_path, LossText(state.loss_history));
      log << "epoch " << epoch << " loss " << Num(loss) << "\n";
      ++outcome.epochs_run;
    };
    diffusion::Train(*net, adam, x0, d.split.train, targets, schedule, tc, on_epoch);
    if (!fs::exists(ckpt_path)) checkpoint::Write(ckpt_path, checkpoint::PackModel(*net, adam, state));
    WriteFileAtomic(loss_path, LossText(state.loss_history));
    WriteFileAtomic(stage.dir() / "group_a.txt", groups::VectorToText(gv.a));
    WriteFileAtomic(stage.dir() / "group_b.txt", groups::VectorToText(gv.b));
    for (const char* f : {"checkpoint.bin", "loss.txt", "group_a.txt", "group_b.txt"})
      stage.Artifact(f);
    outcome.loss_history = state.loss_history;
    stage.Finish();
    return outcome;
  });
}

void PredictStage(const RunConfig& cfg, const LoadedDataset& ds, const fs::path& root,
                  std::ostream& log) {
  Stage stage(root / "predict", "predict", cfg);
  stage.Input("dataset", ds.fingerprint);
  stage.Guard([&] {
    const fs::path ckpt_path = root / "train" / "checkpoint.bin";
    if (!fs::exists(ckpt_path)) throw Error("no checkpoint at " + ckpt_path.string() + "; run 'train' first");
    checkpoint::ModelState state;
    const model::NoisePredictor net = checkpoint::UnpackModel(checkpoint::Read(ckpt_path), state);
    if (state.dataset_fingerprint != ds.fingerprint)
      throw Error("fingerprint mismatch: checkpoint was trained on dataset " +
                  state.dataset_fingerprint + " but the current dataset is " + ds.fingerprint);
    stage.Input("checkpoint", HexDigest(Fnv1a(ReadFile(ckpt_path))));
    const auto& d = ds.dump;
    const Matrix x0 = TrainInput(d);
    const Matrix targets = groups::CounterfactualTargets(d.groups, state.group_vectors);
    const auto schedule =
        diffusion::BuildSchedule(state.config.num_steps, state.variance_scale, state.beta_min);
    diffusion::PredictOptions opts = config::ToPredictOptions(cfg);
    if (opts.t_start > schedule.steps())
      throw ConfigError("predict.t_start exceeds the checkpoint's diffusion steps");
    const Matrix pred = diffusion::PredictAll(net, x0, targets, schedule, opts);

    checkpoint::PredictionFile file;
    file.normalization = d.matrix.normalization;
    file.ratings = pred.unaryExpr([&](double v) { return file.normalization.Denormalize(v); });
    file.fingerprint = ds.fingerprint;
    WriteFileAtomic(stage.dir() / "predictions.bin", checkpoint::SerializePredictions(file));
    stage.Artifact("predictions.bin");
    log << "wrote " << pred.rows() << " x " << pred.cols() << " predictions\n";
    stage.Finish();
  });
}

eval::MetricsReport EvalStage(const RunConfig& cfg, const LoadedDataset& ds, const fs::path& root,
                              const fs::path& predictions, const std::string& label,
                              std::ostream& log) {
  Stage stage(root / "eval", "eval", cfg);
  stage.Input("dataset", ds.fingerprint);
  return stage.Guard([&] {
    if (!fs::exists(predictions))
      throw Error("no predictions at " + predictions.string() + "; run 'predict' first");
    const auto file = checkpoint::ParsePredictions(ReadFile(predictions), predictions.string());
    if (file.fingerprint != ds.fingerprint)
      throw Error("fingerprint mismatch: predictions were made for dataset " + file.fingerprint +
                  " but the current dataset is " + ds.fingerprint);
    const auto& d = ds.dump;
    if ((d.split.test.array() != 0).count() == 0) throw Error("dataset has no test split");
    const Matrix pred =
        file.ratings.unaryExpr([&](double v) { return d.matrix.normalization.Normalize(v); });
    eval::MetricsReport r = eval::Evaluate(pred, d.matrix, d.split, d.groups, config::EffectiveK(cfg));
    r.seed = cfg.seed;
    r.config_hash = config::Hash(cfg);
    r.label = label;
    WriteFileAtomic(stage.dir() / "metrics.json", eval::ToJson(r).dump(2) + "\n");
    WriteFileAtomic(stage.dir() / "metrics.txt", eval::ToTable({r}));
    stage.Artifact("metrics.json");
    stage.Artifact("metrics.txt");
    log << eval::ToTable({r});
    stage.Finish();
    return r;
  });
}

PipelineResult Pipeline(const RunConfig& cfg, const LoadedDataset& ds, const fs::path& root,
                        const std::string& label, std::ostream& log) {
  PipelineResult out;
  try {
    TrainStage(cfg, ds, root, log);
  } catch (const NumericError& e) {
    out.aborted = true;
    out.error = e.what();
    out.metrics.label = label;
    out.metrics.config_hash = config::Hash(cfg);
    out.metrics.seed = cfg.seed;
    log << label << ": aborted on non-finite values: " << e.what() << "\n";
    return out;
  }
  PredictStage(cfg, ds, root, log);
  out.metrics = EvalStage(cfg, ds, root, root / "predict" / "predictions.bin", label, log);
  return out;
}

nlohmann::json RowJson(const PipelineResult& r) {
  nlohmann::json j = eval::ToJson(r.metrics);
  j["status"] = r.aborted ? "aborted" : "ok";
  if (r.aborted) j["error"] = r.error;
  return j;
}

std::string RowsTable(const std::vector<PipelineResult>& rows) {
  std::vector<eval::MetricsReport> ok;
  std::string aborted;
  for (const auto& r : rows) {
    if (r.aborted)
      aborted += r.metrics.label + ": ABORTED (non-finite loss)\n";
    else
      ok.push_back(r.metrics);
  }
  return (ok.empty() ? std::string() : eval::ToTable(ok)) + aborted;
}

void WriteRows(const fs::path& dir, const std::string& stem, const std::vector<PipelineResult>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(RowJson(r));
  WriteFileAtomic(dir / (stem + ".json"), arr.dump(2) + "\n");
  WriteFileAtomic(dir / (stem + ".txt"), RowsTable(rows));
}

}  // namespace

nlohmann::json RunManifest::ToJson() const {
  nlohmann::json j;
  j["command"] = command;
  j["status"] = status;
  j["config_hash"] = config_hash;
  j["code_version"] = code_version;
  j["seed"] = seed;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["inputs"] = inputs;
  j["artifacts"] = artifacts;
  if (!error.empty()) j["error"] = error;
  return j;
}

void RunManifest::Write(const fs::path& dir) const {
  WriteFileAtomic(dir / "manifest.json", ToJson().dump(2) + "\n");
}

IngestResult Ingest(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = fs::path(cfg.out_dir) / "dataset";
  Stage stage(dir, "ingest", cfg);
  return stage.Guard([&] {
    data::RatingDataset ds;
    data::NormalizationScheme scheme = data::NormalizationScheme::kMinMax;
    auto need = [](const std::string& path, const std::string& what) {
      if (!fs::exists(path)) throw Error(what + " not found: " + path);
    };
    switch (cfg.dataset) {
      case data::DatasetKind::kMovieLens:
        need(cfg.ratings_path, "ratings file");
        need(cfg.users_path, "users file (needed for attribute " + data::ToString(cfg.attribute) + ")");
        ds = data::ParseMovieLens(cfg.ratings_path, cfg.users_path);
        stage.Input("ratings", HexDigest(Fnv1a(ReadFile(cfg.ratings_path))));
        stage.Input("users", HexDigest(Fnv1a(ReadFile(cfg.users_path))));
        break;
      case data::DatasetKind::kLastFm: {
        need(cfg.user_artists_path, "user_artists file");
        std::optional<fs::path> tags;
        if (!cfg.tags_path.empty()) {
          need(cfg.tags_path, "tags file");
          tags = cfg.tags_path;
          stage.Input("tags", HexDigest(Fnv1a(ReadFile(cfg.tags_path))));
        }
        ds = data::ParseLastFm(cfg.user_artists_path, tags);
        stage.Input("user_artists", HexDigest(Fnv1a(ReadFile(cfg.user_artists_path))));
        scheme = data::NormalizationScheme::kLog1pMinMax;
        break;
      }
      case data::DatasetKind::kSynthetic: {
        data::SyntheticConfig sc = cfg.synthetic;
        sc.seed = cfg.seed;
        ds = data::GeneratePlantedBias(sc);
        break;
      }
    }
    const int raw_users = static_cast<int>(data::UserIndex(ds).size());
    const int min_total = cfg.min_train + 3;
    if (cfg.max_users > 0 || cfg.max_items > 0)
      ds = data::Subsample(ds, cfg.max_users > 0 ? cfg.max_users : INT_MAX,
                           cfg.max_items > 0 ? cfg.max_items : INT_MAX, min_total, cfg.seed);
    const int dropped = data::DropSparseUsers(ds, min_total);
    if (dropped > 0) log << "dropped " << dropped << " users with fewer than " << min_total << " ratings\n";

    data::DatasetDump dump;
    dump.kind = cfg.dataset;
    dump.matrix = data::BuildMatrix(ds, scheme);
    dump.groups = data::AssignGroups(ds, dump.matrix.users, cfg.attribute, cfg.thresholds);
    dump.split = data::Split(dump.matrix, cfg.split, cfg.min_train, cfg.seed);
    // The split only looks at the mask; refit the scale on training ratings.
    dump.matrix = data::BuildMatrix(ds, scheme, &dump.split.train);

    IngestResult result;
    result.fingerprint = data::WriteDump(dir, dump);
    result.users = dump.matrix.num_users();
    result.items = dump.matrix.num_items();
    result.dropped_users = dropped;
    stage.Input("raw_users", std::to_string(raw_users));
    stage.Input("users", std::to_string(result.users));
    stage.Input("items", std::to_string(result.items));
    stage.Input("dataset", result.fingerprint);
    for (const char* f : {"header.txt", "users.tsv", "items.tsv", "triplets.bin", "split.bin"})
      stage.Artifact(f);
    log << "ingested " << result.users << " users x " << result.items << " items, group A "
        << dump.groups.group_a.size() << ", group B " << dump.groups.group_b.size()
        << ", fingerprint " << result.fingerprint << "\n";
    stage.Finish();
    return result;
  });
}

TrainOutcome Train(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  return TrainStage(cfg, ds, cfg.out_dir, log);
}

void Predict(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  PredictStage(cfg, ds, cfg.out_dir, log);
}

eval::MetricsReport Evaluate(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  return EvalStage(cfg, ds, cfg.out_dir, fs::path(cfg.out_dir) / "predict" / "predictions.bin",
                   model::ToString(cfg.variant), log);
}

eval::MetricsReport TrainMfBaseline(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  const fs::path root = fs::path(cfg.out_dir) / "mf";
  {
    Stage stage(root / "train", "mf", cfg);
    stage.Input("dataset", ds.fingerprint);
    stage.Guard([&] {
      const auto& d = ds.dump;
      baseline::MfConfig mc = cfg.mf;
      mc.seed = cfg.seed;
      std::vector<double> history;
      const auto cells = baseline::CollectCells(d.matrix.ratings, d.split.train);
      checkpoint::MfState st;
      st.params = baseline::TrainMf(cells, d.matrix.num_items(), d.matrix.num_users(), mc, &history);
      st.dataset_fingerprint = ds.fingerprint;
      checkpoint::Write(stage.dir() / "checkpoint.bin", checkpoint::PackMf(st));
      WriteFileAtomic(stage.dir() / "loss.txt", LossText(history));
      log << "mf final objective " << Num(history.back()) << "\n";

      Stage pstage(root / "predict", "mf-predict", cfg);
      pstage.Input("dataset", ds.fingerprint);
      checkpoint::PredictionFile file;
      file.normalization = d.matrix.normalization;
      file.ratings = baseline::PredictMf(st.params, file.normalization);
      file.fingerprint = ds.fingerprint;
      WriteFileAtomic(pstage.dir() / "predictions.bin", checkpoint::SerializePredictions(file));
      pstage.Artifact("predictions.bin");
      pstage.Finish();
      stage.Artifact("checkpoint.bin");
      stage.Artifact("loss.txt");
      stage.Finish();
    });
  }
  return EvalStage(cfg, ds, root, root / "predict" / "predictions.bin", "mf", log);
}

std::vector<eval::MetricsReport> Ablate(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  const fs::path root = fs::path(cfg.out_dir) / "ablate";
  Stage stage(root, "ablate", cfg);
  stage.Input("dataset", ds.fingerprint);
  return stage.Guard([&] {
    std::vector<PipelineResult> rows;
    for (model::Variant v :
         {model::Variant::kFull, model::Variant::kNoEncoder, model::Variant::kNoCounterfactual}) {
      RunConfig vc = cfg;
      vc.variant = v;
      const std::string name = model::ToString(v);
      log << "== variant " << name << "\n";
      rows.push_back(Pipeline(vc, ds, root / name, name, log));
    }
    WriteRows(root, "report", rows);
    stage.Artifact("report.json");
    stage.Artifact("report.txt");
    log << RowsTable(rows);
    stage.Finish();
    std::vector<eval::MetricsReport> out;
    for (const auto& r : rows) out.push_back(r.metrics);
    return out;
  });
}

std::vector<PipelineResult> Sweep(const RunConfig& cfg, std::ostream& log) {
  // Validate every value before any compute.
  std::vector<RunConfig> runs;
  for (double v : cfg.sweep_values) {
    RunConfig vc = cfg;
    if (cfg.sweep_param == "T")
      vc.steps = static_cast<int>(v);
    else
      vc.scale = v;
    config::Validate(vc);
    runs.push_back(vc);
  }
  const LoadedDataset ds = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  const fs::path root = fs::path(cfg.out_dir) / "sweep";
  Stage stage(root, "sweep", cfg);
  stage.Input("dataset", ds.fingerprint);
  return stage.Guard([&] {
    std::vector<PipelineResult> rows;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const RunConfig& vc = runs[i];
      const std::string label = cfg.sweep_param + "=" +
                                (cfg.sweep_param == "T" ? std::to_string(vc.steps) : Num(vc.scale));
      const fs::path dir = root / label;
      const fs::path done = dir / "result.json";
      const std::string hash = config::Hash(vc);
      if (fs::exists(done)) {
        const auto j = nlohmann::json::parse(ReadFile(done));
        if (j.value("config_hash", "") == hash) {
          log << label << ": already complete, skipping\n";
          PipelineResult r;
          r.aborted = j.at("status") == "aborted";
          r.error = j.value("error", "");
          r.metrics = eval::FromJson(j.at("metrics"));
          rows.push_back(r);
          continue;
        }
      }
      log << "== " << label << "\n";
      PipelineResult r = Pipeline(vc, ds, dir, label, log);
      nlohmann::json j;
      j["config_hash"] = hash;
      j["status"] = r.aborted ? "aborted" : "ok";
      j["error"] = r.error;
      j["metrics"] = eval::ToJson(r.metrics);
      WriteFileAtomic(done, j.dump(2) + "\n");
      rows.push_back(r);
    }
    WriteRows(root, "table", rows);
    stage.Artifact("table.json");
    stage.Artifact("table.txt");
    log << RowsTable(rows);
    stage.Finish();
    return rows;
  });
}

std::vector<PipelineResult> Sparsity(const RunConfig& cfg, std::ostream& log) {
  const LoadedDataset base = LoadDataset(fs::path(cfg.out_dir) / "dataset");
  const fs::path root = fs::path(cfg.out_dir) / "sparsity";
  Stage stage(root, "sparsity", cfg);
  stage.Input("dataset", base.fingerprint);
  return stage.Guard([&] {
    const auto& d = base.dump;
    const int minority = d.groups.MinorityLabel();
    std::vector<int> pool = minority == 0 ? d.groups.group_a : d.groups.group_b;
    // One permutation per seed, so larger ratios remove a superset of users.
    Rng rng(cfg.seed, "sparsity");
    std::shuffle(pool.begin(), pool.end(), rng.engine());

    std::vector<std::pair<std::string, double>> plan = {{"base", 0.0}};
    for (double r : cfg.sparsity_ratios) plan.emplace_back("ratio=" + Num(r), r);

    std::vector<PipelineResult> rows;
    for (const auto& [label, ratio] : plan) {
      int remove = static_cast<int>(std::floor(ratio * static_cast<double>(pool.size()) + 1e-9));
      if (static_cast<int>(pool.size()) - remove < 2) {
        remove = std::max(0, static_cast<int>(pool.size()) - 2);
        log << label << ": keeping 2 minority users\n";
      }
      std::vector<char> drop(d.matrix.num_users(), 0);
      for (int k = 0; k < remove; ++k) drop[pool[k]] = 1;
      std::vector<int> keep;
      for (int j = 0; j < d.matrix.num_users(); ++j)
        if (!drop[j]) keep.push_back(j);

      const fs::path dir = root / label;
      data::Subset sub = data::SelectUsers(d.matrix, d.split, d.groups, keep);
      data::DatasetDump dump{sub.matrix, sub.split, sub.groups, d.kind};
      LoadedDataset ds;
      ds.fingerprint = data::WriteDump(dir / "dataset", dump);
      ds.dump = std::move(dump);
      log << "== " << label << ": removed " << remove << " of " << pool.size()
          << " minority users\n";
      rows.push_back(Pipeline(cfg, ds, dir, label, log));
    }
    WriteRows(root, "table", rows);
    stage.Artifact("table.json");
    stage.Artifact("table.txt");
    log << RowsTable(rows);
    stage.Finish();
    return rows;
  });
}

GradCheckReport GradCheck(const RunConfig& cfg, std::ostream& log) {
  const fs::path dir = fs::path(cfg.out_dir) / "gradcheck";
  Stage stage(dir, "gradcheck", cfg);
  return stage.Guard([&] {
    constexpr int kItems = 12;
    constexpr int kSteps = 5;
    constexpr int kBatch = 4;
    constexpr int kProbes = 24;
    const std::uint64_t seed = cfg.seed;
    GradCheckReport report;
    std::ostringstream text;

    Rng data_rng(seed, "gradcheck-data");
    Matrix x0(kItems, kBatch), targets(kItems, kBatch), noise(kItems, kBatch);
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0.data()[i] = 2.0 * data_rng.Uniform() - 1.0;
    for (Eigen::Index i = 0; i < targets.size(); ++i)
      targets.data()[i] = 2.0 * data_rng.Uniform() - 1.0;
    data_rng.FillNormal(noise);
    MaskMatrix mask(kItems, kBatch);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = data_rng.Uniform() < 0.6;
    const std::vector<int> steps = {1, 2, 4, 5};
    // A large variance scale keeps x_t visibly different from x0.
    const auto schedule = diffusion::BuildSchedule(kSteps, 0.2, 1e-3);

    model::ModelConfig mc;
    mc.num_items = kItems;
    mc.num_steps = kSteps;
    mc.time_dim = 6;
    mc.mlp1 = {10, 8};
    mc.mlp2 = {9, 8};
    mc.mlp3 = {10};
    mc.tokens = 2;
    mc.token_dim = 4;
    mc.seed = seed;

    auto check_model = [&](model::Variant variant, const std::function<void(nn::ParamList&)>& bug) {
      mc.variant = variant;
      model::NoisePredictor net(mc);
      // Wider random weights than the default init make the attention scores
      // non-uniform, so the query/key gradients are far from zero.
      for (nn::Param* p : net.Params()) {
        Rng w(seed, "gradcheck-weights:" + p->name);
        w.FillNormal(p->value);
        p->value *= 0.5;
      }
      auto loss = [&] {
        return diffusion::BatchLossAndGrad(net, x0, mask, targets, steps, noise, schedule, false);
      };
      nn::ParamList params = net.TrainableParams();
      auto grads = [&] {
        diffusion::BatchLossAndGrad(net, x0, mask, targets, steps, noise, schedule, true);
        if (bug) bug(params);
      };
      return nn::GradCheck(loss, grads, net.Params(), kProbes, 1e-6, seed);
    };

    for (model::Variant v :
         {model::Variant::kFull, model::Variant::kNoEncoder, model::Variant::kNoCounterfactual}) {
      const auto res = check_model(v, {});
      for (const auto& [name, err] : res.max_rel_error) {
        report.composed[model::ToString(v) + "/" + name] = err;
        report.composed_max = std::max(report.composed_max, err);
      }
    }

    // Individual layers under a fixed random linear read-out.
    auto layer_check = [&](const std::string& suite, nn::ParamList params,
                           const std::function<Matrix()>& forward,
                           const std::function<void(const Matrix&)>& backward) {
      const Matrix probe = forward();
      Matrix readout(probe.rows(), probe.cols());
      Rng r(seed, "gradcheck-readout:" + suite);
      r.FillNormal(readout);
      auto loss = [&] { return forward().cwiseProduct(readout).sum(); };
      auto grads = [&] {
        for (nn::Param* p : params) p->ZeroGrad();
        backward(readout);
      };
      const auto res = nn::GradCheck(loss, grads, params, kProbes, 1e-5, seed);
      for (const auto& [name, err] : res.max_rel_error) {
        report.layers[suite + "/" + name] = err;
        report.layers_max = std::max(report.layers_max, err);
      }
    };

    Matrix in(7, kBatch);
    Rng in_rng(seed, "gradcheck-input");
    in_rng.FillNormal(in);
    {
      nn::LinearLayer lin("linear", 7, 5, seed);
      nn::LinearCache cache;
      layer_check(
          "linear", lin.Params(), [&] { return nn::LinearForward(lin, in, &cache); },
          [&](const Matrix& dy) {
            auto g = nn::LinearBackward(lin, cache, dy);
            lin.weight.grad += g.d_weight;
            lin.bias.grad += g.d_bias;
          });
    }
    {
      nn::Mlp mlp("mlp", {7, 9, 6}, seed);
      for (nn::Param* p : mlp.Params()) Rng(seed, "gradcheck-mlp:" + p->name).FillNormal(p->value);
      nn::Mlp::Cache cache;
      layer_check(
          "mlp_silu", mlp.Params(), [&] { return mlp.Forward(in, &cache); },
          [&](const Matrix& dy) { mlp.Backward(cache, dy); });
    }
    {
      nn::Attention att("attention", 7, 6, 6, 3, 4, seed);
      Matrix kv(6, kBatch);
      in_rng.FillNormal(kv);
      nn::Attention::Cache cache;
      layer_check(
          "attention", att.Params(), [&] { return att.Forward(in, kv, kv, &cache); },
          [&](const Matrix& dy) { att.Backward(cache, dy); });
    }
    {
      model::TimeEmbedding time{{"time.table", Matrix::Zero(kSteps, 6), {}, true}};
      Rng(seed, "gradcheck-time").FillNormal(time.table.value);
      layer_check(
          "time", {&time.table}, [&] { return time.Forward(steps); },
          [&](const Matrix& dy) { time.Backward(steps, dy); });
    }

    // Negative control: a 5% error in one block's gradient must be caught.
    const auto bad = check_model(model::Variant::kFull, [](nn::ParamList& ps) {
      for (nn::Param* p : ps)
        if (p->name == "mlp3.1.weight") p->grad *= 1.05;
    });
    report.negative_control = bad.max_rel_error.count("mlp3.1.weight")
                                  ? bad.max_rel_error.at("mlp3.1.weight")
                                  : 0.0;

    report.passed = report.composed_max < 1e-4 && report.layers_max < 1e-6 &&
                    report.negative_control > 1e-4;
    text << "composed eps_theta (m = " << kItems << ", T = " << kSteps << "), threshold 1e-4\n";
    for (const auto& [name, err] : report.composed) text << "  " << name << "\t" << Num(err) << "\n";
    text << "individual layers, threshold 1e-6\n";
    for (const auto& [name, err] : report.layers) text << "  " << name << "\t" << Num(err) << "\n";
    text << "negative control (mlp3.1.weight grad x1.05)\t" << Num(report.negative_control)
         << (report.negative_control > 1e-4 ? "\tdetected" : "\tMISSED") << "\n";
    text << "composed max " << Num(report.composed_max) << ", layer max " << Num(report.layers_max)
         << "\n"
         << (report.passed ? "PASS" : "FAIL") << "\n";
    WriteFileAtomic(dir / "report.txt", text.str());
    stage.Artifact("report.txt");
    log << text.str();
    stage.Finish();
    return report;
  });
}

std::vector<std::string> CommandNames() {
  return {"ingest", "train", "predict", "eval", "mf", "ablate", "sweep", "sparsity", "gradcheck"};
}

int Run(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    config::Validate(cfg);
    if (command == "ingest") {
      Ingest(cfg, out);
    } else if (command == "train") {
      Train(cfg, out);
    } else if (command == "predict") {
      Predict(cfg, out);
    } else if (command == "eval") {
      Evaluate(cfg, out);
    } else if (command == "mf") {
      TrainMfBaseline(cfg, out);
    } else if (command == "ablate") {
      Ablate(cfg, out);
    } else if (command == "sweep") {
      Sweep(cfg, out);
    } else if (command == "sparsity") {
      Sparsity(cfg, out);
    } else if (command == "gradcheck") {
      return GradCheck(cfg, out).passed ? 0 : 1;
    } else {
      err << "error: unknown command '" << command << "'\n";
      return 2;
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fairdiff::commands
