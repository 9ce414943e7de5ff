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

#include "gpcorr/derivatives.hpp"

#include <string>

#include "gpcorr/errors.hpp"

namespace gpcorr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_index(Index i, Index count, const char* what) {
  if (i < 0 || i >= count) {
    throw IndexError(std::string(what) + " index " + std::to_string(i) + " outside [0, " + std::to_string(count) +
                     ")");
  }
}

namespace {

// vec of an n x n matrix in column-major order, written into row r of out.
void put_vec_row(MatrixXd& out, Index r, const MatrixXd& h) {
  const Index n = h.rows();
  for (Index f = 0; f < n; ++f) {
    for (Index d = 0; d < n; ++d) out(r, d + n * f) = h(d, f);
  }
}

}  // namespace

KernelGradSlices build_kernel_grad_slices(const TrainedModel& model) {
  const auto& hp = model.hp();
  const Points& z = model.training().locations;
  const Points& xe = model.test().locations;
  const Index T = model.num_train();
  const Index M = model.num_test();
  const Index n = model.dim();

  KernelGradSlices s;
  s.num_train = T;
  s.num_test = M;
  s.dim = n;
  s.eT.resize(T);
  s.TT.resize(T);
  s.eT_hess.resize(T);
  s.TT_hess.resize(T);

  for (Index i = 0; i < T; ++i) {
    MatrixXd& ge = s.eT[i];
    MatrixXd& gt = s.TT[i];
    MatrixXd& he = s.eT_hess[i];
    MatrixXd& ht = s.TT_hess[i];
    ge.resize(M, n);
    he.resize(M, n * n);
    gt.setZero(T, n);
    ht.setZero(T, n * n);
    for (Index e = 0; e < M; ++e) {
      ge.row(e) = kernel::grad_second_arg(xe.row(e), z.row(i), hp).transpose();
      put_vec_row(he, e, kernel::hess(xe.row(e), z.row(i), hp, kernel::HessianKind::second_second));
    }
    for (Index l = 0; l < T; ++l) {
      if (l == i) continue;
      gt.row(l) = kernel::grad_second_arg(z.row(l), z.row(i), hp).transpose();
      put_vec_row(ht, l, kernel::hess(z.row(l), z.row(i), hp, kernel::HessianKind::second_second));
    }
  }
  return s;
}

IndexFactors index_factors(const TrainedModel& model, const KernelGradSlices& slices, Index i) {
  check_index(i, slices.num_train, "training");
  const MatrixXd& P = model.P();
  IndexFactors f;
  f.PU = P * slices.TT[i];
  f.Q = slices.eT[i] - f.PU;
  f.W = model.factor().solve(slices.TT[i]);
  f.PHK = P * slices.TT_hess[i];
  f.kinv_col = model.factor().solve(VectorXd::Unit(slices.num_train, i));
  return f;
}

MatrixXd mean_jacobian_generic(const MatrixXd& P, const IndexView& vi, const MatrixXd& C) {
  const Index M = P.rows();
  const Index n = vi.TT.cols();
  const Index i = vi.index;
  const MatrixXd UC = vi.TT.transpose() * C;
  MatrixXd out(M * n, C.cols());
  for (Index d = 0; d < n; ++d) {
    out.middleRows(d * M, M).noalias() = vi.factors.Q.col(d) * C.row(i);
    out.middleRows(d * M, M).noalias() -= P.col(i) * UC.row(d);
  }
  return out;
}

MatrixXd mean_hessian_generic(const MatrixXd& P, const IndexView& vi, const IndexView& vj, const MatrixXd& C) {
  const Index M = P.rows();
  const Index n = vi.TT.cols();
  const Index R = C.cols();
  const Index i = vi.index;
  const Index j = vj.index;
  const bool diag = (i == j);

  const MatrixXd& Qi = vi.factors.Q;
  const MatrixXd& Qj = vj.factors.Q;
  const MatrixXd& Wi = vi.factors.W;
  const MatrixXd& Wj = vj.factors.W;
  const MatrixXd UCi = vi.TT.transpose() * C;
  const MatrixXd UCj = vj.TT.transpose() * C;
  const MatrixXd UiWj = vi.TT.transpose() * Wj;
  const MatrixXd UjWi = vj.TT.transpose() * Wi;
  const double k_ji = vi.factors.kinv_col(j);
  const double k_ij = vj.factors.kinv_col(i);
  const auto pi = P.col(i);
  const auto pj = P.col(j);

  MatrixXd out(M * n * n, R);
  Eigen::RowVectorXd coef(R);
  for (Index f = 0; f < n; ++f) {
    for (Index d = 0; d < n; ++d) {
      const Index col = d + n * f;
      auto block = out.middleRows(col * M, M);

      coef = k_ji * UCi.row(d) + Wi(j, d) * C.row(i);
      block.noalias() = -Qj.col(f) * coef;
      coef = k_ij * UCj.row(f) + Wj(i, f) * C.row(j);
      block.noalias() -= Qi.col(d) * coef;
      coef = Wi(j, d) * UCj.row(f) + UiWj(d, f) * C.row(j);
      block.noalias() += pi * coef;
      coef = Wj(i, f) * UCi.row(d) + UjWi(f, d) * C.row(i);
      block.noalias() += pj * coef;

      if (diag) {
        // z_i moves both the test-train column and the whole training row/column.
        coef = vi.TT_hess.col(col).transpose() * C;
        block.noalias() += vi.eT_hess.col(col) * C.row(i);
        block.noalias() -= pi * coef;
        block.noalias() -= vi.factors.PHK.col(col) * C.row(i);
      } else {
        // Only the (i, j) and (j, i) training entries depend on both points.
        const double s = -vi.TT_hess(j, col);
        coef = s * C.row(j);
        block.noalias() -= pi * coef;
        coef = s * C.row(i);
        block.noalias() -= pj * coef;
      }
    }
  }
  return out;
}

CovJacobian cov_jacobian_generic(const MatrixXd& P, const IndexView& vi) {
  const Index n = vi.TT.cols();
  const auto pi = P.col(vi.index);
  CovJacobian out(n);
  MatrixXd a;
  for (Index d = 0; d < n; ++d) {
    a.noalias() = vi.factors.Q.col(d) * pi.transpose();
    out[d] = -(a + a.transpose());
  }
  return out;
}

CovHessian cov_hessian_generic(const MatrixXd& P, const IndexView& vi, const IndexView& vj) {
  const Index n = vi.TT.cols();
  const Index i = vi.index;
  const Index j = vj.index;
  const bool diag = (i == j);
  const MatrixXd& Qi = vi.factors.Q;
  const MatrixXd& Qj = vj.factors.Q;
  const MatrixXd& Wi = vi.factors.W;
  const MatrixXd& Wj = vj.factors.W;
  const MatrixXd UiWj = vi.TT.transpose() * Wj;
  const double k_ji = vi.factors.kinv_col(j);
  const auto pi = P.col(i);
  const auto pj = P.col(j);

  CovHessian out(n * n);
  MatrixXd x;
  for (Index f = 0; f < n; ++f) {
    for (Index d = 0; d < n; ++d) {
      const Index col = d + n * f;
      const auto q1 = Qi.col(d);
      const auto q2 = Qj.col(f);
      x.noalias() = k_ji * q1 * q2.transpose();
      x.noalias() -= Wj(i, f) * q1 * pj.transpose();
      x.noalias() -= Wi(j, d) * pi * q2.transpose();
      x.noalias() += UiWj(d, f) * pi * pj.transpose();
      if (diag) {
        x.noalias() += vi.eT_hess.col(col) * pi.transpose();
        x.noalias() -= pi * vi.factors.PHK.col(col).transpose();
      } else {
        const double s = -vi.TT_hess(j, col);
        x.noalias() -= s * pi * pj.transpose();
      }
      out[col] = -(x + x.transpose());
    }
  }
  return out;
}

MatrixXd mean_jacobian(const TrainedModel& model, const KernelGradSlices& slices, Index i) {
  check_index(i, slices.num_train, "training");
  const MatrixXd& P = model.P();
  const VectorXd& c = model.c();
  const MatrixXd& U = slices.TT[i];
  const Index n = slices.dim;
  // J[:, d] = (eT_i - P U_i)[:, d] c_i - P[:, i] (U_i[:, d] . c)
  MatrixXd J = slices.eT[i];
  J.noalias() -= P * U;
  J *= c(i);
  for (Index d = 0; d < n; ++d) J.col(d) -= P.col(i) * U.col(d).dot(c);
  return J;
}

CovJacobian cov_jacobian(const TrainedModel& model, const KernelGradSlices& slices, Index i) {
  check_index(i, slices.num_train, "training");
  IndexFactors f;
  f.PU = model.P() * slices.TT[i];
  f.Q = slices.eT[i] - f.PU;
  const IndexView v{i, slices.eT_hess[i], slices.TT[i], slices.TT_hess[i], f};
  return cov_jacobian_generic(model.P(), v);
}

MatrixXd mean_hessian(const TrainedModel& model, const KernelGradSlices& slices, Index i, Index j) {
  check_index(i, slices.num_train, "training");
  check_index(j, slices.num_train, "training");
  const IndexFactors fi = index_factors(model, slices, i);
  const IndexFactors fj = (i == j) ? fi : index_factors(model, slices, j);
  const IndexView vi{i, slices.eT_hess[i], slices.TT[i], slices.TT_hess[i], fi};
  const IndexView vj{j, slices.eT_hess[j], slices.TT[j], slices.TT_hess[j], fj};
  const MatrixXd flat = mean_hessian_generic(model.P(), vi, vj, model.c());
  return Eigen::Map<const MatrixXd>(flat.data(), slices.num_test, slices.dim * slices.dim);
}

CovHessian cov_hessian(const TrainedModel& model, const KernelGradSlices& slices, Index i, Index j) {
  check_index(i, slices.num_train, "training");
  check_index(j, slices.num_train, "training");
  const IndexFactors fi = index_factors(model, slices, i);
  const IndexFactors fj = (i == j) ? fi : index_factors(model, slices, j);
  const IndexView vi{i, slices.eT_hess[i], slices.TT[i], slices.TT_hess[i], fi};
  const IndexView vj{j, slices.eT_hess[j], slices.TT[j], slices.TT_hess[j], fj};
  return cov_hessian_generic(model.P(), vi, vj);
}

StructuralTensors build_structural_tensors(const TrainedModel& model, const KernelGradSlices& slices) {
  const Index T = slices.num_train;
  const MatrixXd Kinv = model.factor().solve(MatrixXd::Identity(T, T));
  std::vector<IndexFactors> factors;
  factors.reserve(T);
  for (Index i = 0; i < T; ++i) factors.push_back(index_factors(model, slices, i));

  StructuralTensors out;
  out.F.resize(T);
  out.G.resize(T * T);
  for (Index i = 0; i < T; ++i) {
    const IndexView vi{i, slices.eT_hess[i], slices.TT[i], slices.TT_hess[i], factors[i]};
    out.F[i] = mean_jacobian_generic(model.P(), vi, Kinv);
  }
  for (Index j = 0; j < T; ++j) {
    const IndexView vj{j, slices.eT_hess[j], slices.TT[j], slices.TT_hess[j], factors[j]};
    for (Index i = 0; i < T; ++i) {
      const IndexView vi{i, slices.eT_hess[i], slices.TT[i], slices.TT_hess[i], factors[i]};
      out.G[i + T * j] = mean_hessian_generic(model.P(), vi, vj, Kinv);
    }
  }
  return out;
}

MatrixXd hessian_block(const MatrixXd& H, Index t, Index n) {
  check_index(t, H.rows(), "output");
  MatrixXd b(n, n);
  for (Index f = 0; f < n; ++f) {
    for (Index d = 0; d < n; ++d) b(d, f) = H(t, d + n * f);
  }
  return b;
}

std::vector<MatrixXd> dense_eT_gradient(const KernelGradSlices& slices, Index i) {
  check_index(i, slices.num_train, "training");
  std::vector<MatrixXd> out(slices.dim);
  for (Index d = 0; d < slices.dim; ++d) {
    out[d].setZero(slices.num_test, slices.num_train);
    out[d].col(i) = slices.eT[i].col(d);
  }
  return out;
}

std::vector<MatrixXd> dense_TT_gradient(const KernelGradSlices& slices, Index i) {
  check_index(i, slices.num_train, "training");
  std::vector<MatrixXd> out(slices.dim);
  for (Index d = 0; d < slices.dim; ++d) {
    out[d].setZero(slices.num_train, slices.num_train);
    out[d].col(i) = slices.TT[i].col(d);
    out[d].row(i) = slices.TT[i].col(d).transpose();
  }
  return out;
}

}  // namespace gpcorr
