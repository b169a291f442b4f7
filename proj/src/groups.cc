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
#include "fairdiff/groups.h"

#include <cmath>
#include <limits>
#include <sstream>

namespace fairdiff::groups {

std::string ToString(GroupVectorMethod method) {
  return method == GroupVectorMethod::kMeanPool ? "mean_pool" : "pca";
}

GroupVectorMethod ParseGroupVectorMethod(const std::string& name) {
  if (name == "mean_pool") return GroupVectorMethod::kMeanPool;
  if (name == "pca") return GroupVectorMethod::kPca;
  throw ConfigError("unknown group vector method: " + name);
}

Vector MeanPoolColumns(const Matrix& ratings, const std::vector<int>& columns) {
  if (columns.empty()) throw Error("mean pooling over an empty group");
  Vector sum = Vector::Zero(ratings.rows());
  for (int j : columns) {
    if (j < 0 || j >= ratings.cols()) throw ShapeError("group column out of range");
    sum += ratings.col(j);
  }
  return sum / static_cast<double>(columns.size());
}

void NormalizeSign(Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0) v = -v;
      return;
    }
  }
}

namespace {

// v -> X (X^T v) / (k - 1) without forming the m x m covariance.
class CovarianceOperator {
 public:
  explicit CovarianceOperator(Matrix centered)
      : x_(std::move(centered)), scale_(1.0 / static_cast<double>(x_.cols() - 1)) {}
  Vector Apply(const Vector& v) const { return scale_ * (x_ * (x_.transpose() * v)); }
  Eigen::Index dim() const { return x_.rows(); }

 private:
  Matrix x_;
  double scale_;
};

Vector StartVector(Eigen::Index dim) {
  Rng rng(0, "power-iteration");
  Vector v(dim);
  rng.FillNormal(v);
  return v.normalized();
}

// Largest eigenvalue of C restricted to the complement of v, estimated by a
// short deflated power iteration. Never exceeds the true second eigenvalue.
double SecondEigenvalueLowerBound(const CovarianceOperator& op, const Vector& v, double lambda1,
                                  int iterations) {
  Vector u = StartVector(op.dim());
  u.reverseInPlace();
  u -= v * v.dot(u);
  if (u.norm() == 0.0) return 0.0;
  u.normalize();
  double rayleigh = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vector w = op.Apply(u) - lambda1 * v * v.dot(u);
    w -= v * v.dot(w);
    rayleigh = u.dot(w);
    double norm = w.norm();
    if (norm == 0.0) break;
    u = w / norm;
  }
  return rayleigh;
}

}  // namespace

PrincipalComponent FirstPrincipalComponent(const Matrix& ratings, const std::vector<int>& columns,
                                           const PowerIterationOptions& options) {
  if (columns.size() < 2) throw Error("PCA group vector needs at least 2 users in the group");
  const Eigen::Index m = ratings.rows();
  Matrix block(m, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c] < 0 || columns[c] >= ratings.cols()) throw ShapeError("group column out of range");
    block.col(static_cast<Eigen::Index>(c)) = ratings.col(columns[c]);
  }
  Vector mean = block.rowwise().mean();
  block.colwise() -= mean;
  CovarianceOperator op(std::move(block));

  PrincipalComponent pc;
  auto fallback = [&]() {
    pc.vector = Vector::Zero(m);
    pc.vector(0) = 1.0;
    pc.degenerate = true;
    pc.eigenvalue = pc.vector.dot(op.Apply(pc.vector));
    return pc;
  };

  Vector v = StartVector(m);
  double prev_diff = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int it = 1; it <= options.max_iter; ++it) {
    Vector w = op.Apply(v);
    double norm = w.norm();
    if (norm == 0.0) return fallback();  // zero covariance: every direction ties
    w /= norm;
    double diff = (w - v).norm();
    // Successive differences shrink geometrically with ratio rho; stopping at
    // diff < tol (1 - rho) bounds the remaining distance to the limit by tol.
    double rho = std::isfinite(prev_diff) && prev_diff > 0 ? std::min(diff / prev_diff, 0.999999) : 0.0;
    v = std::move(w);
    pc.iterations = it;
    if (diff == 0.0 || (it > 1 && diff < options.tol * (1.0 - rho))) {
      converged = true;
      break;
    }
    prev_diff = diff;
  }

  double lambda1 = v.dot(op.Apply(v));
  double lambda2 = SecondEigenvalueLowerBound(op, v, lambda1, 50);
  if (lambda1 <= 0.0 || lambda1 - lambda2 <= options.tie_tol * lambda1) return fallback();
  if (!converged) {
    double residual = (op.Apply(v) - lambda1 * v).norm();
    std::ostringstream msg;
    msg << "power iteration did not converge in " << options.max_iter
        << " iterations (residual " << residual << ")";
    throw ConvergenceError(msg.str(), residual);
  }
  NormalizeSign(v);
  pc.vector = std::move(v);
  pc.eigenvalue = lambda1;
  return pc;
}

GroupVectors MeanPool(const Matrix& train_ratings, const data::GroupAssignment& groups) {
  if (static_cast<Eigen::Index>(groups.s.size()) != train_ratings.cols())
    throw ShapeError("group assignment does not match the matrix columns");
  GroupVectors gv;
  gv.method = GroupVectorMethod::kMeanPool;
  gv.a = MeanPoolColumns(train_ratings, groups.group_a);
  gv.b = MeanPoolColumns(train_ratings, groups.group_b);
  return gv;
}

GroupVectors PcaFirstComponent(const Matrix& train_ratings, const data::GroupAssignment& groups,
                               const PowerIterationOptions& options) {
  if (static_cast<Eigen::Index>(groups.s.size()) != train_ratings.cols())
    throw ShapeError("group assignment does not match the matrix columns");
  GroupVectors gv;
  gv.method = GroupVectorMethod::kPca;
  auto pa = FirstPrincipalComponent(train_ratings, groups.group_a, options);
  auto pb = FirstPrincipalComponent(train_ratings, groups.group_b, options);
  gv.a = std::move(pa.vector);
  gv.b = std::move(pb.vector);
  gv.degenerate_a = pa.degenerate;
  gv.degenerate_b = pb.degenerate;
  return gv;
}

GroupVectors BuildGroupVectors(const Matrix& train_ratings, const data::GroupAssignment& groups,
                               GroupVectorMethod method) {
  return method == GroupVectorMethod::kMeanPool ? MeanPool(train_ratings, groups)
                                                : PcaFirstComponent(train_ratings, groups);
}

Matrix CounterfactualTargets(const data::GroupAssignment& groups, const GroupVectors& vectors) {
  if (vectors.a.size() != vectors.b.size()) throw ShapeError("group vectors differ in length");
  const Eigen::Index n = static_cast<Eigen::Index>(groups.s.size());
  Matrix g(vectors.a.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) g.col(j) = groups.s[j] == 0 ? vectors.b : vectors.a;
  return g;
}

Matrix ApplyMask(const Matrix& ratings, const MaskMatrix& mask) {
  if (ratings.rows() != mask.rows() || ratings.cols() != mask.cols())
    throw ShapeError("ratings and mask differ in shape");
  return ratings.cwiseProduct(mask.cast<double>());
}

std::string VectorToText(const Vector& v) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v(i) << "\n";
  return out.str();
}

}  // namespace fairdiff::groups
