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
#include <filesystem>
#include <random>

#include "gpcorr/correction.hpp"
#include "gpcorr/errors.hpp"
#include "gpcorr/oracle.hpp"
#include "support/fixtures.hpp"

using gpcorr::CorrectionOptions;
using gpcorr::PerturbationSet;
using gpcorr::Schedule;
using gpcorr_test::bit_equal;
using gpcorr_test::rel_diff;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

PerturbationSet random_pert(const gpcorr::TrainedModel& m, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd d(m.num_train(), m.dim());
  for (Index k = 0; k < d.size(); ++k) d.data()[k] = g(rng);
  double dmax = 0.0;
  for (Index r = 0; r < d.rows(); ++r) dmax = std::max(dmax, d.row(r).norm());
  return PerturbationSet::from_rows(d, dmax);
}

}  // namespace

TEST_CASE("empty perturbation returns the baseline exactly") {
  const auto m = gpcorr_test::one_d_model();
  const auto ops = gpcorr::precompute(m);
  const PerturbationSet empty(11, 1, 0.0);
  for (auto sched : {Schedule::fused, Schedule::blockwise}) {
    for (int order : {1, 2}) {
      CHECK(bit_equal(gpcorr::correct_mean(ops, m, empty, order, sched), m.mean_hat()));
      CHECK(bit_equal(gpcorr::correct_cov(ops, m, empty, order, sched), m.cov_hat()));
      CorrectionOptions o;
      o.order = order;
      o.schedule = sched;
      o.keep_terms = true;
      const auto out = gpcorr::correct(ops, m, empty, o);
      CHECK(bit_equal(out.mean, m.mean_hat()));
      CHECK(bit_equal(out.cov, m.cov_hat()));
      CHECK(out.terms->mean_first.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  const auto a1 = gpcorr::run_algorithm_1(m, empty);
  CHECK(bit_equal(a1.mean, m.mean_hat()));
  CHECK(bit_equal(a1.cov, m.cov_hat()));
}

TEST_CASE("correct equals correct_mean and correct_cov bit for bit") {
  const auto m = gpcorr::oracle::random_instance(31, {5, 6, 2});
  const auto ops = gpcorr::precompute(m);
  const auto pert = random_pert(m, 0.03, 2);
  for (auto sched : {Schedule::fused, Schedule::blockwise}) {
    for (int order : {1, 2}) {
      CorrectionOptions o;
      o.order = order;
      o.schedule = sched;
      const auto out = gpcorr::correct(ops, m, pert, o);
      CHECK(bit_equal(out.mean, gpcorr::correct_mean(ops, m, pert, order, sched)));
      CHECK(bit_equal(out.cov, gpcorr::correct_cov(ops, m, pert, order, sched)));
      o.keep_terms = true;
      o.report_definiteness = true;
      const auto kept = gpcorr::correct(ops, m, pert, o);
      CHECK(bit_equal(kept.mean, out.mean));
      CHECK(bit_equal(kept.cov, out.cov));
    }
  }
}

TEST_CASE("fused and blockwise schedules agree") {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    const auto m = gpcorr::oracle::random_instance(seed, {4, 5, 1 + seed % 3});
    const auto ops = gpcorr::precompute(m);
    const auto pert = random_pert(m, 0.05, seed);
    for (int order : {1, 2}) {
      CHECK(rel_diff(gpcorr::correct_mean(ops, m, pert, order, Schedule::fused),
                     gpcorr::correct_mean(ops, m, pert, order, Schedule::blockwise)) <= 1e-10);
      CHECK(rel_diff(gpcorr::correct_cov(ops, m, pert, order, Schedule::fused),
                     gpcorr::correct_cov(ops, m, pert, order, Schedule::blockwise)) <= 1e-10);
    }
  }
}

TEST_CASE("kept terms sum to the corrected moments") {
  const auto m = gpcorr::oracle::random_instance(50, {5, 4, 2});
  const auto ops = gpcorr::precompute(m);
  const auto pert = random_pert(m, 0.05, 3);
  for (auto sched : {Schedule::fused, Schedule::blockwise}) {
    CorrectionOptions o;
    o.schedule = sched;
    o.keep_terms = true;
    const auto out = gpcorr::correct(ops, m, pert, o);
    REQUIRE(out.terms);
    const auto& t = *out.terms;
    CHECK(rel_diff(m.mean_hat() + t.mean_first + t.mean_second, out.mean) <= 1e-12);
    CHECK((m.cov_hat() + t.cov_first + t.cov_second - out.cov).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("corrected covariance is exactly symmetric") {
  const auto m = gpcorr::oracle::random_instance(51, {6, 5, 2});
  const auto ops = gpcorr::precompute(m);
  const auto pert = random_pert(m, 0.05, 4);
  for (auto sched : {Schedule::fused, Schedule::blockwise}) {
    const MatrixXd S = gpcorr::correct_cov(ops, m, pert, 2, sched);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("first-order mean along one coordinate is the jacobian column") {
  const auto m = gpcorr::oracle::random_instance(52, {4, 3, 2});
  const auto ops = gpcorr::precompute(m);
  const MatrixXd J = gpcorr::mean_jacobian(m, ops.slices(), 1);
  const double h = 1e-3;
  PerturbationSet pert(4, 2, h);
  pert.set(1, VectorXd::Unit(2, 0) * h);
  const VectorXd step = (gpcorr::correct_mean(ops, m, pert, 1) - m.mean_hat()) / h;
  CHECK(rel_diff(step, J.col(0)) <= 1e-12);
}

TEST_CASE("first-order increments are additive over disjoint index sets") {
  const auto m = gpcorr::oracle::random_instance(53, {5, 4, 2});
  const auto ops = gpcorr::precompute(m);
  PerturbationSet a(5, 2, 0.1);
  PerturbationSet b(5, 2, 0.1);
  PerturbationSet ab(5, 2, 0.1);
  VectorXd d1(2);
  VectorXd d2(2);
  d1 << 0.02, -0.01;
  d2 << -0.03, 0.015;
  a.set(0, d1);
  b.set(3, d2);
  ab.set(0, d1);
  ab.set(3, d2);
  const VectorXd inc_a = gpcorr::correct_mean(ops, m, a, 1) - m.mean_hat();
  const VectorXd inc_b = gpcorr::correct_mean(ops, m, b, 1) - m.mean_hat();
  const VectorXd inc_ab = gpcorr::correct_mean(ops, m, ab, 1) - m.mean_hat();
  CHECK(rel_diff(inc_a + inc_b, inc_ab) <= 1e-12);
  const MatrixXd ca = gpcorr::correct_cov(ops, m, a, 1) - m.cov_hat();
  const MatrixXd cb = gpcorr::correct_cov(ops, m, b, 1) - m.cov_hat();
  const MatrixXd cab = gpcorr::correct_cov(ops, m, ab, 1) - m.cov_hat();
  CHECK((ca + cb - cab).cwiseAbs().maxCoeff() <= 1e-12 * cab.cwiseAbs().maxCoeff() + 1e-15);
}

TEST_CASE("halving the perturbation shrinks the residual by the expected order") {
  const auto m = gpcorr::oracle::random_instance(54, {3, 2, 1});
  const auto ops = gpcorr::precompute(m);
  const auto base = random_pert(m, 1.0, 5);
  const double norm = base.to_dense().norm();
  const auto pert = base.scaled(0.02 / norm);
  const auto half = base.scaled(0.01 / norm);
  const auto residual = [&](const PerturbationSet& p, int order) {
    const auto truth = gpcorr::predict_at(m, m.training().locations + p.to_dense());
    const auto out = gpcorr::correct(ops, m, p, CorrectionOptions{order});
    return std::make_pair((out.mean - truth.mean).norm(), (out.cov - truth.cov).norm());
  };
  const auto [m1, c1] = residual(pert, 1);
  const auto [m1h, c1h] = residual(half, 1);
  const auto [m2, c2] = residual(pert, 2);
  const auto [m2h, c2h] = residual(half, 2);
  CHECK(m1 / m1h == doctest::Approx(4.0).epsilon(0.25));
  CHECK(c1 / c1h == doctest::Approx(4.0).epsilon(0.25));
  CHECK(m2 / m2h == doctest::Approx(8.0).epsilon(0.25));
  CHECK(c2 / c2h == doctest::Approx(8.0).epsilon(0.25));
}

TEST_CASE("1D correction moves the mean toward the retrained model") {
  const auto cfg = gpcorr::harness::ExperimentConfig::one_d_defaults();
  const auto inst = gpcorr::harness::make_instance(cfg, 0);
  const auto m = gpcorr::train(gpcorr::TrainingSet(inst.planned, inst.y), gpcorr::TestGrid(inst.test), cfg.hp);
  const auto ops = gpcorr::precompute(m);
  const auto pert = PerturbationSet::from_rows(inst.deltas, inst.delta_max);
  const auto truth = gpcorr::predict_at(m, inst.truth);
  const VectorXd corrected = gpcorr::correct_mean(ops, m, pert, 2);
  CHECK((corrected - truth.mean).norm() < 0.1 * (m.mean_hat() - truth.mean).norm());
}

TEST_CASE("psd projection clips negative eigenvalues") {
  MatrixXd a(3, 3);
  a << 2.0, 0.0, 0.0, 0.0, -1e-3, 0.0, 0.0, 0.0, 1.0;
  const MatrixXd rot = Eigen::HouseholderQR<MatrixXd>(MatrixXd::Random(3, 3)).householderQ();
  const MatrixXd s = rot * a * rot.transpose();
  const MatrixXd p = gpcorr::project_psd(s);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-14);
  CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((p - p.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("definiteness report and projection on a large perturbation") {
  const auto m = gpcorr_test::one_d_model();
  const auto ops = gpcorr::precompute(m);
  CorrectionOptions o;
  o.report_definiteness = true;
  const auto pert = random_pert(m, 0.03, 6);
  const auto out = gpcorr::correct(ops, m, pert, o);
  REQUIRE(out.min_eigenvalue);
  REQUIRE(out.max_abs_eigenvalue);
  CHECK_FALSE(out.psd_projected);
  o.psd_project = true;
  const auto proj = gpcorr::correct(ops, m, pert, o);
  CHECK(proj.psd_projected);
  CHECK(*proj.min_eigenvalue == *out.min_eigenvalue);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(proj.cov);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12 * eig.eigenvalues().maxCoeff());
  CHECK(bit_equal(proj.mean, out.mean));
}

TEST_CASE("perturbation sets validate their entries") {
  PerturbationSet p(4, 2, 0.1);
  CHECK(p.empty());
  CHECK_THROWS_AS(p.set(4, VectorXd::Zero(2)), gpcorr::IndexError);
  CHECK_THROWS_AS(p.set(-1, VectorXd::Zero(2)), gpcorr::IndexError);
  CHECK_THROWS_AS(p.set(0, VectorXd::Zero(3)), gpcorr::InputError);
  CHECK_THROWS_AS(p.set(0, VectorXd::Constant(2, 0.1)), gpcorr::InputError);
  CHECK_THROWS_AS(p.set(0, VectorXd::Constant(2, std::nan(""))), gpcorr::InputError);
  p.set(2, VectorXd::Constant(2, 0.05));
  CHECK(p.size() == 1);
  const MatrixXd dense = p.to_dense();
  CHECK(dense.row(2).norm() == doctest::Approx(0.05 * std::sqrt(2.0)));
  CHECK(dense.row(0).norm() == 0.0);
  const auto s = p.scaled(2.0);
  CHECK(s.delta_max() == 0.2);
  CHECK(s.entries().at(2)[0] == 0.1);
  CHECK_THROWS_AS(p.scaled(-1.0), gpcorr::InputError);
  CHECK_THROWS_AS(PerturbationSet(0, 1, 0.1), gpcorr::InputError);
  CHECK_THROWS_AS(PerturbationSet(3, 1, -0.1), gpcorr::InputError);
}

TEST_CASE("correction rejects mismatched inputs") {
  const auto m = gpcorr_test::one_d_model();
  const auto ops = gpcorr::precompute(m);
  const PerturbationSet wrong_t(10, 1, 0.1);
  const PerturbationSet wrong_n(11, 2, 0.1);
  const PerturbationSet ok(11, 1, 0.1);
  CHECK_THROWS_AS(gpcorr::correct_mean(ops, m, wrong_t, 2), gpcorr::ContractError);
  CHECK_THROWS_AS(gpcorr::correct_cov(ops, m, wrong_n, 2), gpcorr::ContractError);
  gpcorr::Hyperparams hp = m.hp();
  hp.alpha = 2.0;
  const auto other = gpcorr::train(m.training(), m.test(), hp);
  CHECK_THROWS_AS(gpcorr::correct_mean(ops, other, ok, 2), gpcorr::ContractError);
  CHECK_THROWS_AS(gpcorr::correct_mean(ops, m, ok, 3), gpcorr::InputError);
  CHECK_THROWS_AS(gpcorr::correct_mean(ops, m, ok, 0), gpcorr::InputError);
  CHECK(gpcorr::parse_schedule("blockwise") == Schedule::blockwise);
  CHECK_THROWS_AS(gpcorr::parse_schedule("eager"), gpcorr::InputError);
}

TEST_CASE("run_algorithm_1 writes and reuses an operator cache") {
  const auto m = gpcorr_test::one_d_model();
  const auto pert = random_pert(m, 0.01, 7);
  const auto dir = std::filesystem::temp_directory_path() / "gpcorr_test_correction";
  std::filesystem::create_directories(dir);
  const auto path = dir / "alg1.gprc";
  std::filesystem::remove(path);
  gpcorr::Algorithm1Options o;
  o.cache = path;
  const auto first = gpcorr::run_algorithm_1(m, pert, o);
  CHECK(std::filesystem::exists(path));
  const auto second = gpcorr::run_algorithm_1(m, pert, o);
  CHECK(bit_equal(first.mean, second.mean));
  CHECK(bit_equal(first.cov, second.cov));
  CHECK(first.offline_seconds >= 0.0);
  CHECK(first.online_seconds >= 0.0);
  const auto direct = gpcorr::correct(gpcorr::precompute(m), m, pert);
  CHECK(bit_equal(direct.mean, first.mean));
}
