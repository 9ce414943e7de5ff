/*
 * Copyright 2026 The gpcorr Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GPCORR_ORACLE_HPP
#define GPCORR_ORACLE_HPP

#include <cstdint>
#include <vector>

#include "gpcorr/derivatives.hpp"
#include "gpcorr/gp.hpp"

namespace gpcorr::oracle {

/// Central finite differences of the retrained moments.
struct FdConfig {
  /// Step is step_scale * max(1, |coordinate|).
  double step_scale = 1e-5;
  double rtol = 1e-6;
  double atol = 1e-10;

  /// Throws InputError unless step_scale is in (0, 1e-2] and tolerances are >= 0.
  void validate() const;
};

/// Normwise comparison: pass iff max|actual - expected| <= atol + rtol * max|expected|.
struct Comparison {
  double max_abs_diff = 0.0;
  double scale = 0.0;     ///< max|expected|
  double rel_error = 0.0; ///< max_abs_diff / max(scale, tiny)
  bool pass = false;
};

Comparison compare(const Eigen::MatrixXd& actual, const Eigen::MatrixXd& expected, double rtol, double atol);
Comparison compare(const std::vector<Eigen::MatrixXd>& actual, const std::vector<Eigen::MatrixXd>& expected,
                   double rtol, double atol);

/// d mean / d z_i by differencing predict_at. M x n.
Eigen::MatrixXd fd_mean_jacobian(const TrainedModel& model, Eigen::Index i, const FdConfig& cfg = {});

/// d cov / d z_i by differencing predict_at. n matrices of M x M.
CovJacobian fd_cov_jacobian(const TrainedModel& model, Eigen::Index i, const FdConfig& cfg = {});

/// d^2 mean / dz_i dz_j by differencing the analytic Jacobian for z_i while
/// moving z_j. M x n^2 in the library's flattened layout.
Eigen::MatrixXd fd_mean_hessian(const TrainedModel& model, Eigen::Index i, Eigen::Index j,
                                const FdConfig& cfg = {});

/// d^2 cov / dz_i dz_j by differencing the analytic covariance Jacobian.
CovHessian fd_cov_hessian(const TrainedModel& model, Eigen::Index i, Eigen::Index j, const FdConfig& cfg = {});

/// Gradient of k(a, b) in b from differences of kernel values.
Eigen::VectorXd fd_kernel_grad(PointRef a, PointRef b, const Hyperparams& hp, double step_scale = 1e-5);

/// Second derivatives of k from differences of the analytic gradient in b.
Eigen::MatrixXd fd_kernel_hess(PointRef a, PointRef b, const Hyperparams& hp, kernel::HessianKind which,
                               double step_scale = 1e-5);

struct InstanceShape {
  Eigen::Index T = 3;
  Eigen::Index M = 2;
  Eigen::Index n = 1;
};

/// Random well-conditioned problem: locations in [0, 1]^n, beta in [0.4, 0.9],
/// alpha in [0.5, 2], sigma_y in [0.05, 0.3] * alpha, standard normal Y.
TrainedModel random_instance(std::uint64_t seed, const InstanceShape& shape);

}  // namespace gpcorr::oracle

#endif  // GPCORR_ORACLE_HPP
