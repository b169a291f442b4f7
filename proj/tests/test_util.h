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

// Shared helpers for the unit tests.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "fairdiff/common.h"
#include "fairdiff/data.h"

namespace fairdiff::testing {

// A fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "fairdiff_XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw Error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline Matrix RandomMatrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                           const std::string& stream = "test") {
  Matrix m(rows, cols);
  Rng(seed, stream).FillNormal(m);
  return m;
}

inline MaskMatrix RandomMask(Eigen::Index rows, Eigen::Index cols, double p, std::uint64_t seed) {
  MaskMatrix m(rows, cols);
  Rng rng(seed, "mask");
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.Uniform() < p;
  return m;
}

}  // namespace fairdiff::testing
