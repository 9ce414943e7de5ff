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

#include <doctest.h>

#include <cmath>

#include "gpcorr/derivatives.hpp"
#include "gpcorr/errors.hpp"
#include "gpcorr/oracle.hpp"
#include "support/fixtures.hpp"

namespace oracle = gpcorr::oracle;
using Eigen::MatrixXd;
using gpcorr_test::bit_equal;
using gpcorr_test::column;

TEST_CASE("step configuration is validated") {
  CHECK_NOTHROW((oracle::FdConfig{}).validate());
  CHECK_NOTHROW((oracle::FdConfig{1e-2, 0.0, 0.0}).validate());
  CHECK_THROWS_AS((oracle::FdConfig{0.0, 1e-6, 1e-10}).validate(), gpcorr::InputError);
  CHECK_THROWS_AS((oracle::FdConfig{0.1, 1e-6, 1e-10}).validate(), gpcorr::InputError);
  CHECK_THROWS_AS((oracle::FdConfig{1e-5, -1.0, 1e-10}).validate(), gpcorr::InputError);
  const auto m = oracle::random_instance(3, {3, 2, 1});
  CHECK_THROWS_AS(oracle::fd_mean_jacobian(m, 0, oracle::FdConfig{-1.0, 0.0, 0.0}), gpcorr::InputError);
}

TEST_CASE("oracle indices are checked") {
  const auto m = oracle::random_instance(4, {3, 2, 2});
  CHECK_THROWS_AS(oracle::fd_mean_jacobian(m, 3), gpcorr::IndexError);
  CHECK_THROWS_AS(oracle::fd_cov_jacobian(m, -1), gpcorr::IndexError);
  CHECK_THROWS_AS(oracle::fd_mean_hessian(m, 0, 3), gpcorr::IndexError);
  CHECK_THROWS_AS(oracle::fd_cov_hessian(m, 5, 0), gpcorr::IndexError);
  CHECK_THROWS_AS(oracle::random_instance(1, {0, 2, 1}), gpcorr::InputError);
}

TEST_CASE("oracle shapes") {
  const auto m = oracle::random_instance(5, {4, 3, 2});
  CHECK(oracle::fd_mean_jacobian(m, 1).rows() == 3);
  CHECK(oracle::fd_mean_jacobian(m, 1).cols() == 2);
  CHECK(oracle::fd_cov_jacobian(m, 1).size() == 2);
  CHECK(oracle::fd_mean_hessian(m, 1, 2).cols() == 4);
  CHECK(oracle::fd_cov_hessian(m, 1, 2).size() == 4);
  CHECK(oracle::fd_cov_hessian(m, 1, 2)[3].rows() == 3);
}

TEST_CASE("oracle agrees with an exact derivative of a near-linear mean") {
  // With a long lengthscale and a single point the mean is a scaled kernel
  // column whose derivative is known in closed form.
  const gpcorr::Hyperparams hp{1.0, 2.0, 0.5};
  const auto m = gpcorr::train(gpcorr::TrainingSet(column({0.3}), Eigen::VectorXd::Constant(1, 1.5)),
                               gpcorr::TestGrid(column({0.0, 0.9})), hp);
  const double denom = hp.alpha * hp.alpha + hp.sigma_y * hp.sigma_y;
  MatrixXd exact(2, 1);
  for (Eigen::Index e = 0; e < 2; ++e) {
    const double x = e == 0 ? 0.0 : 0.9;
    const double r = 0.3 - x;
    const double k = std::exp(-r * r / (2.0 * hp.beta * hp.beta));
    exact(e, 0) = 1.5 / denom * (-r / (hp.beta * hp.beta)) * k;
  }
  const auto c = oracle::compare(oracle::fd_mean_jacobian(m, 0), exact, 1e-8, 1e-12);
  CHECK(c.pass);
}

TEST_CASE("halving the step reduces the jacobian error roughly fourfold") {
  const auto m = oracle::random_instance(21, {4, 3, 2});
  const MatrixXd exact = gpcorr::mean_jacobian(m, gpcorr::build_kernel_grad_slices(m), 2);
  const double e1 = (oracle::fd_mean_jacobian(m, 2, {4e-3, 0, 0}) - exact).cwiseAbs().maxCoeff();
  const double e2 = (oracle::fd_mean_jacobian(m, 2, {2e-3, 0, 0}) - exact).cwiseAbs().maxCoeff();
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("second-order oracles are symmetric across the pair swap") {
  const auto m = oracle::random_instance(22, {3, 2, 2});
  const MatrixXd hij = oracle::fd_mean_hessian(m, 0, 2);
  const MatrixXd hji = oracle::fd_mean_hessian(m, 2, 0);
  const auto ci = oracle::fd_cov_hessian(m, 0, 2);
  const auto cj = oracle::fd_cov_hessian(m, 2, 0);
  for (Eigen::Index d = 0; d < 2; ++d) {
    for (Eigen::Index f = 0; f < 2; ++f) {
      CHECK((hij.col(d + 2 * f) - hji.col(f + 2 * d)).cwiseAbs().maxCoeff() <= 1e-6 * hij.cwiseAbs().maxCoeff());
      CHECK((ci[d + 2 * f] - cj[f + 2 * d]).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("zero measurements give zero mean derivatives") {
  const auto m = oracle::random_instance(23, {3, 2, 2});
  const auto z = m.with_measurements(Eigen::VectorXd::Zero(3));
  CHECK(oracle::fd_mean_jacobian(z, 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(oracle::fd_mean_hessian(z, 1, 1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random instances and oracles are deterministic") {
  const auto a = oracle::random_instance(77, {5, 4, 3});
  const auto b = oracle::random_instance(77, {5, 4, 3});
  CHECK(bit_equal(a.training().locations, b.training().locations));
  CHECK(bit_equal(a.training().measurements, b.training().measurements));
  CHECK(a.hp().beta == b.hp().beta);
  CHECK(bit_equal(oracle::fd_mean_hessian(a, 1, 4), oracle::fd_mean_hessian(b, 1, 4)));
  const auto c = oracle::random_instance(78, {5, 4, 3});
  CHECK_FALSE(bit_equal(a.training().locations, c.training().locations));
}

TEST_CASE("kernel oracles") {
  const gpcorr::Hyperparams hp{1.3, 0.7, 0.1};
  Eigen::RowVectorXd a(2), b(2);
  a << 0.1, -0.4;
  b << 0.5, 0.2;
  CHECK(gpcorr_test::rel_diff(oracle::fd_kernel_grad(a, b, hp), gpcorr::kernel::grad_second_arg(a, b, hp)) < 1e-8);
  CHECK(gpcorr_test::rel_diff(oracle::fd_kernel_hess(a, b, hp, gpcorr::kernel::HessianKind::second_second),
                              gpcorr::kernel::hess(a, b, hp, gpcorr::kernel::HessianKind::second_second)) < 1e-7);
  CHECK(gpcorr_test::rel_diff(oracle::fd_kernel_hess(a, b, hp, gpcorr::kernel::HessianKind::first_second),
                              gpcorr::kernel::hess(a, b, hp, gpcorr::kernel::HessianKind::first_second)) < 1e-7);
}

TEST_CASE("comparison semantics") {
  MatrixXd e(1, 2), a(1, 2);
  e << 1.0, -2.0;
  a << 1.0, -2.0 + 1e-7;
  auto c = oracle::compare(a, e, 1e-7, 0.0);
  CHECK(c.pass);
  CHECK(c.scale == 2.0);
  CHECK(c.rel_error == doctest::Approx(5e-8).epsilon(1e-6));
  CHECK_FALSE(oracle::compare(a, e, 1e-8, 0.0).pass);
  CHECK(oracle::compare(a, e, 0.0, 2e-7).pass);
  CHECK_THROWS_AS(oracle::compare(MatrixXd(2, 2), e, 0, 0), gpcorr::InputError);
  CHECK(oracle::compare(MatrixXd(0, 0), MatrixXd(0, 0), 0, 0).pass);
  CHECK_THROWS_AS(oracle::compare(gpcorr::CovJacobian(2), gpcorr::CovJacobian(1), 0, 0), gpcorr::InputError);
}
