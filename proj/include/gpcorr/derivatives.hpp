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

#ifndef GPCORR_DERIVATIVES_HPP
#define GPCORR_DERIVATIVES_HPP

#include <vector>

#include <Eigen/Dense>

#include "gpcorr/gp.hpp"

namespace gpcorr {

// Layout conventions
// ------------------
// Derivatives are taken with respect to the training locations z_1..z_T at
// the planned locations. For a pair (i, j) the coordinate of z_i is d and the
// coordinate of z_j is f; the flattened pair index is d + n * f.
//
//   mean Jacobian  J_M^i      M x n         column d
//   mean Hessian   H_M^{i,j}  M x n^2       column d + n f
//   cov Jacobian   J_S^i      n matrices    each M x M
//   cov Hessian    H_S^{i,j}  n^2 matrices  each M x M, index d + n f
//   F^i                       (M n) x T     row e + M d
//   G^{i,j}                   (M n^2) x T   row e + M (d + n f)
//
// Contracting F^i (or G^{i,j}) with Y gives the column-major vectorization
// of J_M^i (or H_M^{i,j}).

using CovJacobian = std::vector<Eigen::MatrixXd>;
using CovHessian = std::vector<Eigen::MatrixXd>;

/// Non-zero parts of the kernel-matrix derivatives with respect to each z_i.
///
/// dK_eT/dz_i only has column i, which is eT[i] (M x n).
/// dK_TT/dz_i only has row and column i; the column is TT[i] (T x n) and the
/// row is its transpose. TT[i] row i is zero since k(z_i, z_i) is constant.
/// The second-derivative slices hold vec(d^2 k / dz_i dz_i^T) per row in the
/// same flattened d + n f order; TT_hess[i] row i is zero for the same reason.
struct KernelGradSlices {
  Eigen::Index num_train = 0;
  Eigen::Index num_test = 0;
  Eigen::Index dim = 0;
  std::vector<Eigen::MatrixXd> eT;
  std::vector<Eigen::MatrixXd> TT;
  std::vector<Eigen::MatrixXd> eT_hess;
  std::vector<Eigen::MatrixXd> TT_hess;
};

KernelGradSlices build_kernel_grad_slices(const TrainedModel& model);

/// Y-independent products for one training index.
///   Q   = eT[i] - P TT[i]            (M x n)
///   W   = K^{-1} TT[i]               (T x n)
///   PU  = P TT[i]                    (M x n)
///   PHK = P TT_hess[i]               (M x n^2)
///   kinv_col = K^{-1} e_i            (T)
struct IndexFactors {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd W;
  Eigen::MatrixXd PU;
  Eigen::MatrixXd PHK;
  Eigen::VectorXd kinv_col;
};

IndexFactors index_factors(const TrainedModel& model, const KernelGradSlices& slices, Eigen::Index i);

/// Everything the generic assembly routines read for a given index.
struct IndexView {
  Eigen::Index index;
  const Eigen::MatrixXd& eT_hess;
  const Eigen::MatrixXd& TT;
  const Eigen::MatrixXd& TT_hess;
  const IndexFactors& factors;
};

/// Mean Jacobian for index i with coefficient matrix C (T x R) in place of
/// K^{-1} Y. Returns (M n) x R. C = c gives vec(J_M^i); C = K^{-1} gives F^i.
Eigen::MatrixXd mean_jacobian_generic(const Eigen::MatrixXd& P, const IndexView& vi, const Eigen::MatrixXd& C);

/// Mean Hessian block for (i, j) with coefficients C. Returns (M n^2) x R.
Eigen::MatrixXd mean_hessian_generic(const Eigen::MatrixXd& P, const IndexView& vi, const IndexView& vj,
                                     const Eigen::MatrixXd& C);

CovJacobian cov_jacobian_generic(const Eigen::MatrixXd& P, const IndexView& vi);
CovHessian cov_hessian_generic(const Eigen::MatrixXd& P, const IndexView& vi, const IndexView& vj);

/// d mean / d z_i, M x n. Uses only the sparse slices; no T x T x n tensor is formed.
Eigen::MatrixXd mean_jacobian(const TrainedModel& model, const KernelGradSlices& slices, Eigen::Index i);

/// d cov / d z_i, n symmetric M x M matrices.
CovJacobian cov_jacobian(const TrainedModel& model, const KernelGradSlices& slices, Eigen::Index i);

/// d^2 mean / dz_i dz_j, M x n^2.
Eigen::MatrixXd mean_hessian(const TrainedModel& model, const KernelGradSlices& slices, Eigen::Index i,
                             Eigen::Index j);

/// d^2 cov / dz_i dz_j, n^2 symmetric M x M matrices.
CovHessian cov_hessian(const TrainedModel& model, const KernelGradSlices& slices, Eigen::Index i,
                       Eigen::Index j);

struct StructuralTensors {
  std::vector<Eigen::MatrixXd> F;  // T entries
  std::vector<Eigen::MatrixXd> G;  // T * T entries, index i + T j
};

/// Builds every F^i and G^{i,j}. Memory is T^2 M n T + T^3 M n^2 scalars;
/// use CorrectionOperators with a lazy policy for large problems.
StructuralTensors build_structural_tensors(const TrainedModel& model, const KernelGradSlices& slices);

/// Reads the n x n block of output row t from a flattened Hessian row.
Eigen::MatrixXd hessian_block(const Eigen::MatrixXd& H, Eigen::Index t, Eigen::Index n);

/// Dense M x T x n reconstruction of dK_eT/dz_i, as n matrices of M x T.
std::vector<Eigen::MatrixXd> dense_eT_gradient(const KernelGradSlices& slices, Eigen::Index i);

/// Dense T x T x n reconstruction of dK_TT/dz_i, as n matrices of T x T.
std::vector<Eigen::MatrixXd> dense_TT_gradient(const KernelGradSlices& slices, Eigen::Index i);

/// Throws IndexError unless 0 <= i < count.
void check_index(Eigen::Index i, Eigen::Index count, const char* what);

}  // namespace gpcorr

#endif  // GPCORR_DERIVATIVES_HPP
