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

using gpcorr::Hyperparams;
using gpcorr::Points;
using gpcorr::TestGrid;
using gpcorr::TrainingSet;
using gpcorr_test::bit_equal;
using gpcorr_test::column;
using gpcorr_test::rel_diff;
using Eigen::Index;
using Eigen::MatrixXd;

namespace {

Eigen::VectorXd flat(const MatrixXd& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

}  // namespace

TEST_CASE("slices vanish where the kernel gradient vanishes") {
  const auto m = gpcorr::train(TrainingSet(column({0.5}), Eigen::VectorXd::Constant(1, 1.0)), TestGrid(column({0.5})),
                               Hyperparams{1.0, 0.1, 0.0});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  CHECK(s.eT[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.TT[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("1D slices match the kernel gradient formula") {
  const auto m = gpcorr_test::one_d_model();
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const auto& x = m.training().locations;
  const auto& xe = m.test().locations;
  const double b2 = m.hp().beta * m.hp().beta;
  for (Index i : {Index{0}, Index{5}, Index{10}}) {
    for (Index e = 0; e < m.num_test(); e += 7) {
      const double diff = xe(e, 0) - x(i, 0);
      const double expected = diff / b2 * gpcorr::kernel::eval(xe.row(e), x.row(i), m.hp());
      CHECK(s.eT[i](e, 0) == doctest::Approx(expected).epsilon(1e-13));
    }
    CHECK(s.TT[i](i, 0) == 0.0);
  }
}

TEST_CASE("dense reconstructions are zero outside the perturbed row and column") {
  const auto m = gpcorr::oracle::random_instance(4, {5, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const Index i = 2;
  const auto eT = gpcorr::dense_eT_gradient(s, i);
  const auto TT = gpcorr::dense_TT_gradient(s, i);
  for (Index d = 0; d < 2; ++d) {
    for (Index r = 0; r < eT[d].rows(); ++r) {
      for (Index c = 0; c < eT[d].cols(); ++c) {
        if (c != i) CHECK(eT[d](r, c) == 0.0);
      }
    }
    for (Index r = 0; r < 5; ++r) {
      for (Index c = 0; c < 5; ++c) {
        if (r != i && c != i) CHECK(TT[d](r, c) == 0.0);
      }
    }
    CHECK((TT[d] - TT[d].transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(TT[d](i, i) == 0.0);
  }
}

TEST_CASE("mean jacobian is zero for one noiseless point observed at the test location") {
  const auto m = gpcorr::train(TrainingSet(column({0.5}), Eigen::VectorXd::Constant(1, 2.0)), TestGrid(column({0.5})),
                               Hyperparams{1.0, 0.1, 0.0});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  CHECK(gpcorr::mean_jacobian(m, s, 0).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(gpcorr::cov_jacobian(m, s, 0)[0].cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("mean jacobian matches finite differences") {
  const auto m = gpcorr::oracle::random_instance(21, {5, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  for (Index i = 0; i < 5; ++i) {
    const auto c = gpcorr::oracle::compare(gpcorr::mean_jacobian(m, s, i), gpcorr::oracle::fd_mean_jacobian(m, i),
                                           1e-6, 1e-10);
    CHECK_MESSAGE(c.pass, "index ", i, " rel error ", c.rel_error);
  }
}

TEST_CASE("covariance jacobian matches finite differences and is symmetric") {
  const auto m = gpcorr::oracle::random_instance(22, {4, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  for (Index i = 0; i < 4; ++i) {
    const auto J = gpcorr::cov_jacobian(m, s, i);
    const auto c = gpcorr::oracle::compare(J, gpcorr::oracle::fd_cov_jacobian(m, i), 1e-6, 1e-10);
    CHECK_MESSAGE(c.pass, "index ", i, " rel error ", c.rel_error);
    for (const auto& slab : J) CHECK((slab - slab.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("mean hessian matches finite differences") {
  const auto m = gpcorr::oracle::random_instance(23, {3, 2, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const auto c = gpcorr::oracle::compare(gpcorr::mean_hessian(m, s, i, j),
                                             gpcorr::oracle::fd_mean_hessian(m, i, j), 1e-5, 1e-10);
      CHECK_MESSAGE(c.pass, "pair ", i, ",", j, " rel error ", c.rel_error);
    }
  }
}

TEST_CASE("covariance hessian matches finite differences") {
  const auto m = gpcorr::oracle::random_instance(24, {3, 2, 1});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  for (Index i = 0; i < 3; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const auto c = gpcorr::oracle::compare(gpcorr::cov_hessian(m, s, i, j),
                                             gpcorr::oracle::fd_cov_hessian(m, i, j), 1e-5, 1e-10);
      CHECK_MESSAGE(c.pass, "pair ", i, ",", j, " rel error ", c.rel_error);
    }
  }
}

TEST_CASE("hessian blocks are symmetric under exchange of the two indices") {
  const auto m = gpcorr::oracle::random_instance(25, {4, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  for (Index i = 0; i < 4; ++i) {
    for (Index j = 0; j < 4; ++j) {
      const MatrixXd hij = gpcorr::mean_hessian(m, s, i, j);
      const MatrixXd hji = gpcorr::mean_hessian(m, s, j, i);
      for (Index t = 0; t < m.num_test(); ++t) {
        const MatrixXd a = gpcorr::hessian_block(hij, t, 2);
        const MatrixXd b = gpcorr::hessian_block(hji, t, 2).transpose();
        CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff()));
      }
      const auto cij = gpcorr::cov_hessian(m, s, i, j);
      const auto cji = gpcorr::cov_hessian(m, s, j, i);
      for (Index d = 0; d < 2; ++d) {
        for (Index f = 0; f < 2; ++f) {
          const MatrixXd& a = cij[d + 2 * f];
          const MatrixXd& b = cji[f + 2 * d];
          CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff()));
        }
      }
    }
  }
}

TEST_CASE("mean derivatives scale with Y and vanish for Y = 0") {
  const auto m = gpcorr::oracle::random_instance(26, {4, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const auto doubled = m.with_measurements(2.0 * m.training().measurements);
  const auto zero = m.with_measurements(Eigen::VectorXd::Zero(4));
  CHECK(rel_diff(gpcorr::mean_jacobian(doubled, s, 1), 2.0 * gpcorr::mean_jacobian(m, s, 1)) <= 1e-14);
  CHECK(gpcorr::mean_jacobian(zero, s, 1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(gpcorr::mean_hessian(zero, s, 1, 2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(rel_diff(gpcorr::mean_hessian(doubled, s, 0, 3), 2.0 * gpcorr::mean_hessian(m, s, 0, 3)) <= 1e-14);
}

TEST_CASE("covariance derivatives do not depend on Y") {
  const auto m = gpcorr::oracle::random_instance(27, {4, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const auto other = m.with_measurements(Eigen::VectorXd::LinSpaced(4, -3.0, 5.0));
  for (Index i = 0; i < 4; ++i) {
    const auto a = gpcorr::cov_jacobian(m, s, i);
    const auto b = gpcorr::cov_jacobian(other, s, i);
    for (Index d = 0; d < 2; ++d) CHECK(bit_equal(a[d], b[d]));
    const auto ha = gpcorr::cov_hessian(m, s, i, (i + 1) % 4);
    const auto hb = gpcorr::cov_hessian(other, s, i, (i + 1) % 4);
    for (std::size_t k = 0; k < ha.size(); ++k) CHECK(bit_equal(ha[k], hb[k]));
  }
}

TEST_CASE("structural tensor columns are the derivatives for unit measurement vectors") {
  const auto m = gpcorr::oracle::random_instance(28, {4, 3, 2});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const auto st = gpcorr::build_structural_tensors(m, s);
  REQUIRE(st.F.size() == 4);
  REQUIRE(st.G.size() == 16);
  for (Index k = 0; k < 4; ++k) {
    const auto unit = m.with_measurements(Eigen::VectorXd::Unit(4, k));
    for (Index i = 0; i < 4; ++i) {
      CHECK(rel_diff(st.F[i].col(k), flat(gpcorr::mean_jacobian(unit, s, i))) <= 1e-12);
      const Index j = (i + 2) % 4;
      CHECK(rel_diff(st.G[i + 4 * j].col(k), flat(gpcorr::mean_hessian(unit, s, i, j))) <= 1e-12);
    }
  }
}

TEST_CASE("structural tensors contract with Y to the mean derivatives on the 1D instance") {
  const auto m = gpcorr_test::one_d_model();
  const auto s = gpcorr::build_kernel_grad_slices(m);
  const auto st = gpcorr::build_structural_tensors(m, s);
  const Eigen::VectorXd& y = m.training().measurements;
  const Index T = m.num_train();
  for (Index i = 0; i < T; ++i) {
    CHECK(rel_diff(st.F[i] * y, flat(gpcorr::mean_jacobian(m, s, i))) <= 1e-12);
    for (Index j = 0; j < T; ++j) {
      CHECK(rel_diff(st.G[i + T * j] * y, flat(gpcorr::mean_hessian(m, s, i, j))) <= 1e-12);
      CHECK((st.G[i + T * j] * Eigen::VectorXd::Zero(T)).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("derivative entry points reject bad indices") {
  const auto m = gpcorr::oracle::random_instance(29, {3, 2, 1});
  const auto s = gpcorr::build_kernel_grad_slices(m);
  CHECK_THROWS_AS(gpcorr::mean_jacobian(m, s, 3), gpcorr::IndexError);
  CHECK_THROWS_AS(gpcorr::mean_jacobian(m, s, -1), gpcorr::IndexError);
  CHECK_THROWS_AS(gpcorr::cov_jacobian(m, s, 5), gpcorr::IndexError);
  CHECK_THROWS_AS(gpcorr::mean_hessian(m, s, 0, 3), gpcorr::IndexError);
  CHECK_THROWS_AS(gpcorr::cov_hessian(m, s, 3, 0), gpcorr::IndexError);
}
