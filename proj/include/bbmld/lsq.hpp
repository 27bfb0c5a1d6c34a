// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "bbmld/error.hpp"

namespace bbmld {

struct LsqFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  double rms = 0.0;        // weighted residual root mean square
  double condition = 0.0;  // of the column-equilibrated weighted design
  Eigen::Index dof = 0;
};

/// Weighted linear least squares by SVD. `sigma` holds per-point standard
/// errors; when `absolute_sigma` is false the covariance is rescaled by the
/// residual variance (errors taken from the scatter).
inline LsqFit weighted_lsq(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& sigma, bool absolute_sigma) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (n < p || y.size() != n || sigma.size() != n) throw DomainError("least squares: bad dimensions");
  if ((sigma.array() <= 0.0).any()) throw DomainError("least squares: nonpositive sigma");
  const Eigen::VectorXd wt = sigma.cwiseInverse();
  Eigen::MatrixXd A = wt.asDiagonal() * X;
  const Eigen::VectorXd b = wt.asDiagonal() * y;
  Eigen::VectorXd scale = A.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (scale[j] == 0.0) throw DomainError("least squares: empty design column");
  A = A * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  LsqFit out;
  out.condition = s[0] / s[p - 1];
  const Eigen::VectorXd z = svd.solve(b);
  out.coef = z.cwiseQuotient(scale);
  const Eigen::MatrixXd Vs = svd.matrixV() * s.cwiseInverse().asDiagonal();
  out.cov = scale.cwiseInverse().asDiagonal() * (Vs * Vs.transpose()) * scale.cwiseInverse().asDiagonal();
  const Eigen::VectorXd r = A * z - b;
  out.dof = n - p;
  out.rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
  if (!absolute_sigma && out.dof > 0) out.cov *= r.squaredNorm() / static_cast<double>(out.dof);
  return out;
}

}  // namespace bbmld
