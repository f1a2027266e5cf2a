// Copyright 2026 The simbal-moe Authors
// SPDX-License-Identifier: Apache-2.0

#include "simbal/init.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "simbal/error.hpp"
#include "simbal/rng.hpp"

namespace simbal {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Thin Q with positive diagonal of R; returns false if the input is
// numerically rank deficient.
bool orthonormalize(const RowMatrix& a, RowMatrix& q) {
  const Eigen::Index rows = a.rows(), cols = a.cols();
  Eigen::HouseholderQR<RowMatrix> qr(a);
  const RowMatrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  const double top = r.diagonal().cwiseAbs().maxCoeff();
  if (!(top > 0.0) || r.diagonal().cwiseAbs().minCoeff() < 1e-10 * top) return false;
  q = qr.householderQ() * RowMatrix::Identity(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return true;
}

}  // namespace

Tensor orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw ConfigError("orthogonal_init: empty shape");
  const bool flip = rows < cols;
  const std::size_t tall = flip ? cols : rows, narrow = flip ? rows : cols;
  RowMatrix q;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed + attempt);
    RowMatrix a(tall, narrow);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = rng.normal();
    if (orthonormalize(a, q)) break;
    if (attempt > 16) throw NumericError("orthogonal_init: repeated rank-deficient draws");
  }
  if (flip) q = RowMatrix(q.transpose());
  return Tensor({rows, cols}, std::vector<double>(q.data(), q.data() + q.size()));
}

Tensor normal_init(std::size_t rows, std::size_t cols, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = stddev * rng.normal();
  return Tensor({rows, cols}, std::move(v));
}

void qr_retract(Tensor& m) {
  if (m.rank() != 2 || m.dim(0) < m.dim(1)) {
    throw DimensionError("qr_retract: expected a tall matrix, got " + shape_string(m.shape()));
  }
  Eigen::Map<RowMatrix> view(m.mutable_data().data(), m.dim(0), m.dim(1));
  RowMatrix q;
  if (!orthonormalize(view, q)) throw NumericError("qr_retract: rank-deficient matrix");
  view = q;
}

}  // namespace simbal
