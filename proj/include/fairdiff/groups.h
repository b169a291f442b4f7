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
// Group vectors summarizing each sensitive group's training ratings, and the
// counterfactual target matrix that pairs every user with the other group.

#pragma once

#include <string>

#include "fairdiff/common.h"
#include "fairdiff/data.h"

namespace fairdiff::groups {

enum class GroupVectorMethod { kMeanPool, kPca };

std::string ToString(GroupVectorMethod method);
GroupVectorMethod ParseGroupVectorMethod(const std::string& name);

struct GroupVectors {
  Vector a;
  Vector b;
  GroupVectorMethod method = GroupVectorMethod::kMeanPool;
  // PCA only: set when a group's covariance had no dominant direction and the
  // canonical fallback e1 was returned.
  bool degenerate_a = false;
  bool degenerate_b = false;
};

struct PowerIterationOptions {
  double tol = 1e-8;
  int max_iter = 10000;
  // Top-two eigenvalues within this relative distance count as tied.
  double tie_tol = 1e-10;
};

struct PrincipalComponent {
  Vector vector;  // unit norm, first clearly nonzero coordinate positive
  double eigenvalue = 0.0;
  bool degenerate = false;
  int iterations = 0;
};

// Column means over the given users. ratings is items x users.
Vector MeanPoolColumns(const Matrix& ratings, const std::vector<int>& columns);

// Dominant eigenvector of the item-by-item covariance of the given users'
// columns (items centered across users), by power iteration on the implicit
// operator v -> X (X^T v) / (k - 1). Throws ConvergenceError.
PrincipalComponent FirstPrincipalComponent(const Matrix& ratings, const std::vector<int>& columns,
                                           const PowerIterationOptions& options = {});

// Flips v so that its first coordinate with |value| > 1e-12 is positive.
void NormalizeSign(Vector& v);

// ratings must already be train-masked (R ⊙ train_mask).
GroupVectors MeanPool(const Matrix& train_ratings, const data::GroupAssignment& groups);
GroupVectors PcaFirstComponent(const Matrix& train_ratings, const data::GroupAssignment& groups,
                               const PowerIterationOptions& options = {});
GroupVectors BuildGroupVectors(const Matrix& train_ratings, const data::GroupAssignment& groups,
                               GroupVectorMethod method);

// Column j is b when user j is in A and a when user j is in B.
Matrix CounterfactualTargets(const data::GroupAssignment& groups, const GroupVectors& vectors);

// R ⊙ mask.
Matrix ApplyMask(const Matrix& ratings, const MaskMatrix& mask);

// One value per line, full precision.
std::string VectorToText(const Vector& v);

}  // namespace fairdiff::groups
