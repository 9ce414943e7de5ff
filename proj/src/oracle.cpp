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

#include "gpcorr/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "gpcorr/errors.hpp"

namespace gpcorr::oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void FdConfig::validate() const {
  if (!(step_scale > 0.0 && step_scale <= 1e-2)) {
    throw InputError(fmt::format("finite-difference step_scale must be in (0, 1e-2], got {}", step_scale));
  }
  if (!(rtol >= 0.0) || !(atol >= 0.0)) throw InputError("tolerances must be non-negative");
}

Comparison compare(const MatrixXd& actual, const MatrixXd& expected, double rtol, double atol) {
  if (actual.rows() != expected.rows() || actual.cols() != expected.cols()) {
    throw InputError(fmt::format("cannot compare {}x{} with {}x{}", actual.rows(), actual.cols(), expected.rows(),
                                 expected.cols()));
  }
  Comparison c;
  if (actual.size() > 0) {
    c.max_abs_diff = (actual - expected).cwiseAbs().maxCoeff();
    c.scale = expected.cwiseAbs().maxCoeff();
  }
  c.rel_error = c.max_abs_diff / std::max(c.scale, std::numeric_limits<double>::min());
  c.pass = std::isfinite(c.max_abs_diff) && c.max_abs_diff <= atol + rtol * c.scale;
  return c;
}

Comparison compare(const std::vector<MatrixXd>& actual, const std::vector<MatrixXd>& expected, double rtol,
                   double atol) {
  if (actual.size() != expected.size()) throw InputError("cannot compare tensors with different slab counts");
  Comparison c;
  for (std::size_t k = 0; k < actual.size(); ++k) {
    const Comparison s = compare(actual[k], expected[k], 0.0, 0.0);
    c.max_abs_diff = std::max(c.max_abs_diff, s.max_abs_diff);
    c.scale = std::max(c.scale, s.scale);
  }
  c.rel_error = c.max_abs_diff / std::max(c.scale, std::numeric_limits<double>::min());
  c.pass = std::isfinite(c.max_abs_diff) && c.max_abs_diff <= atol + rtol * c.scale;
  return c;
}

namespace {

double step_for(double coord, const FdConfig& cfg) { return cfg.step_scale * std::max(1.0, std::abs(coord)); }

TrainedModel retrain_at(const TrainedModel& model, const Points& z) {
  return train(TrainingSet(z, model.training().measurements), model.test(), model.hp());
}

void check_pair(const TrainedModel& model, Index i, Index j) {
  check_index(i, model.num_train(), "training");
  check_index(j, model.num_train(), "training");
}

}  // namespace

MatrixXd fd_mean_jacobian(const TrainedModel& model, Index i, const FdConfig& cfg) {
  cfg.validate();
  check_index(i, model.num_train(), "training");
  const Index n = model.dim();
  const Points& x = model.training().locations;
  MatrixXd J(model.num_test(), n);
  for (Index d = 0; d < n; ++d) {
    const double h = step_for(x(i, d), cfg);
    Points zp = x;
    Points zm = x;
    zp(i, d) += h;
    zm(i, d) -= h;
    J.col(d) = (predict_at(model, zp).mean - predict_at(model, zm).mean) / (2.0 * h);
  }
  return J;
}

CovJacobian fd_cov_jacobian(const TrainedModel& model, Index i, const FdConfig& cfg) {
  cfg.validate();
  check_index(i, model.num_train(), "training");
  const Index n = model.dim();
  const Points& x = model.training().locations;
  CovJacobian J(n);
  for (Index d = 0; d < n; ++d) {
    const double h = step_for(x(i, d), cfg);
    Points zp = x;
    Points zm = x;
    zp(i, d) += h;
    zm(i, d) -= h;
    J[d] = (predict_at(model, zp).cov - predict_at(model, zm).cov) / (2.0 * h);
  }
  return J;
}

MatrixXd fd_mean_hessian(const TrainedModel& model, Index i, Index j, const FdConfig& cfg) {
  cfg.validate();
  check_pair(model, i, j);
  const Index n = model.dim();
  const Points& x = model.training().locations;
  MatrixXd H(model.num_test(), n * n);
  for (Index f = 0; f < n; ++f) {
    const double h = step_for(x(j, f), cfg);
    Points zp = x;
    Points zm = x;
    zp(j, f) += h;
    zm(j, f) -= h;
    const TrainedModel mp = retrain_at(model, zp);
    const TrainedModel mm = retrain_at(model, zm);
    const MatrixXd jp = mean_jacobian(mp, build_kernel_grad_slices(mp), i);
    const MatrixXd jm = mean_jacobian(mm, build_kernel_grad_slices(mm), i);
    H.middleCols(f * n, n) = (jp - jm) / (2.0 * h);
  }
  return H;
}

CovHessian fd_cov_hessian(const TrainedModel& model, Index i, Index j, const FdConfig& cfg) {
  cfg.validate();
  check_pair(model, i, j);
  const Index n = model.dim();
  const Points& x = model.training().locations;
  CovHessian H(n * n);
  for (Index f = 0; f < n; ++f) {
    const double h = step_for(x(j, f), cfg);
    Points zp = x;
    Points zm = x;
    zp(j, f) += h;
    zm(j, f) -= h;
    const TrainedModel mp = retrain_at(model, zp);
    const TrainedModel mm = retrain_at(model, zm);
    const CovJacobian jp = cov_jacobian(mp, build_kernel_grad_slices(mp), i);
    const CovJacobian jm = cov_jacobian(mm, build_kernel_grad_slices(mm), i);
    for (Index d = 0; d < n; ++d) H[d + n * f] = (jp[d] - jm[d]) / (2.0 * h);
  }
  return H;
}

VectorXd fd_kernel_grad(PointRef a, PointRef b, const Hyperparams& hp, double step_scale) {
  const double h = step_scale * std::max(1.0, b.norm());
  VectorXd g(b.size());
  Eigen::RowVectorXd bp = b;
  Eigen::RowVectorXd bm = b;
  for (Index d = 0; d < b.size(); ++d) {
    bp[d] = b[d] + h;
    bm[d] = b[d] - h;
    g[d] = (kernel::eval(a, bp, hp) - kernel::eval(a, bm, hp)) / (2.0 * h);
    bp[d] = b[d];
    bm[d] = b[d];
  }
  return g;
}

MatrixXd fd_kernel_hess(PointRef a, PointRef b, const Hyperparams& hp, kernel::HessianKind which,
                        double step_scale) {
  const double h = step_scale * std::max(1.0, b.norm());
  const Index n = b.size();
  MatrixXd H(n, n);
  Eigen::RowVectorXd ap = a;
  Eigen::RowVectorXd am = a;
  Eigen::RowVectorXd bp = b;
  Eigen::RowVectorXd bm = b;
  for (Index f = 0; f < n; ++f) {
    if (which == kernel::HessianKind::second_second) {
      bp[f] = b[f] + h;
      bm[f] = b[f] - h;
      H.col(f) = (kernel::grad_second_arg(a, bp, hp) - kernel::grad_second_arg(a, bm, hp)) / (2.0 * h);
      bp[f] = b[f];
      bm[f] = b[f];
    } else {
      ap[f] = a[f] + h;
      am[f] = a[f] - h;
      H.col(f) = (kernel::grad_second_arg(ap, b, hp) - kernel::grad_second_arg(am, b, hp)) / (2.0 * h);
      ap[f] = a[f];
      am[f] = a[f];
    }
  }
  return H;
}

TrainedModel random_instance(std::uint64_t seed, const InstanceShape& shape) {
  if (shape.T < 1 || shape.M < 1 || shape.n < 1) throw InputError("instance shape must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Hyperparams hp;
  hp.alpha = 0.5 + 1.5 * unit(rng);
  hp.beta = 0.4 + 0.5 * unit(rng);
  hp.sigma_y = (0.05 + 0.25 * unit(rng)) * hp.alpha;

  Points z(shape.T, shape.n);
  Points xe(shape.M, shape.n);
  Eigen::VectorXd y(shape.T);
  for (Index k = 0; k < z.size(); ++k) z.data()[k] = unit(rng);
  for (Index k = 0; k < xe.size(); ++k) xe.data()[k] = unit(rng);
  for (Index k = 0; k < y.size(); ++k) y[k] = gauss(rng);
  return train(TrainingSet(z, y), TestGrid(xe), hp);
}

}  // namespace gpcorr::oracle
