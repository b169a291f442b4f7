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

// The command suite behind the fairdiff tool. Every command reads a validated
// RunConfig and writes its artifacts under config.out_dir:
//
//   dataset/      canonical dump (ingest)
//   train/        checkpoint.bin, loss.txt, group_a.txt, group_b.txt
//   predict/      predictions.bin
//   eval/         metrics.json, metrics.txt
//   mf/           MF baseline checkpoint, predictions and metrics
//   ablate/       one pipeline per variant plus report.{json,txt}
//   sweep/        one pipeline per value plus table.{json,txt}
//   sparsity/     one pipeline per ratio plus table.{json,txt}
//   gradcheck/    report.txt
//
// Each stage directory also holds manifest.json, rewritten atomically when
// the stage starts and when it ends.

#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairdiff/config.h"
#include "fairdiff/eval.h"

namespace fairdiff::commands {

inline constexpr const char* kCodeVersion = "0.1.0";

struct RunManifest {
  std::string command;
  std::string status;  // started | completed | failed
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::map<std::string, std::string> inputs;  // name -> fingerprint
  std::vector<std::string> artifacts;
  std::string error;

  nlohmann::json ToJson() const;
  void Write(const std::filesystem::path& dir) const;
};

struct IngestResult {
  std::string fingerprint;
  int users = 0;
  int items = 0;
  int dropped_users = 0;
};

struct TrainOutcome {
  std::vector<double> loss_history;
  int epochs_run = 0;  // in this invocation
  bool resumed = false;
};

struct PipelineResult {
  eval::MetricsReport metrics;
  bool aborted = false;  // non-finite loss
  std::string error;
};

IngestResult Ingest(const config::RunConfig& config, std::ostream& log);
TrainOutcome Train(const config::RunConfig& config, std::ostream& log);
void Predict(const config::RunConfig& config, std::ostream& log);
eval::MetricsReport Evaluate(const config::RunConfig& config, std::ostream& log);
eval::MetricsReport TrainMfBaseline(const config::RunConfig& config, std::ostream& log);
std::vector<eval::MetricsReport> Ablate(const config::RunConfig& config, std::ostream& log);
std::vector<PipelineResult> Sweep(const config::RunConfig& config, std::ostream& log);
std::vector<PipelineResult> Sparsity(const config::RunConfig& config, std::ostream& log);

struct GradCheckReport {
  std::map<std::string, double> composed;  // block -> max rel error
  std::map<std::string, double> layers;    // layer suite block -> max rel error
  double composed_max = 0.0;
  double layers_max = 0.0;
  double negative_control = 0.0;  // error seen with an injected gradient bug
  bool passed = false;
};

// Finite-difference suites at small dimensions (m = 12, T = 5).
GradCheckReport GradCheck(const config::RunConfig& config, std::ostream& log);

// Loads config file + overrides, validates, and dispatches by name. Returns a
// process exit code; errors are printed to `err`.
int Run(const std::string& command, const config::RunConfig& config, std::ostream& out,
        std::ostream& err);

std::vector<std::string> CommandNames();

}  // namespace fairdiff::commands
