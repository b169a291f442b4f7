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

// fairdiff <command> --config <path> [--seed N] [--k N] [--out DIR] [key=value ...]

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairdiff/commands.h"
#include "fairdiff/config.h"

int main(int argc, char** argv) {
  using namespace fairdiff;

  CLI::App app{"Fair recommendation with conditional diffusion"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;

  std::string names;
  for (const auto& n : commands::CommandNames()) names += (names.empty() ? "" : ", ") + n;
  app.add_option("command", command, "One of: " + names)->required();
  app.add_option("--config", config_path, "Flat key = value config file");
  app.add_option("--seed", seed, "Root seed (overrides the config file)");
  app.add_option("--k", k, "Top-k cutoff (overrides the config file)");
  app.add_option("--out", out_dir, "Output directory (overrides the config file)");
  app.add_option("overrides", overrides, "Extra key=value settings");
  CLI11_PARSE(app, argc, argv);

  config::RunConfig cfg;
  try {
    if (!config_path.empty()) config::Apply(cfg, config::ParseFile(config_path));
    config::Apply(cfg, config::ParseOverrides(overrides));
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  if (seed) cfg.seed = *seed;
  if (k) cfg.k = *k;
  if (out_dir) cfg.out_dir = *out_dir;
  return commands::Run(command, cfg, std::cout, std::cerr);
}
