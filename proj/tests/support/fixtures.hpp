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

#ifndef GPCORR_TESTS_SUPPORT_FIXTURES_HPP
#define GPCORR_TESTS_SUPPORT_FIXTURES_HPP

#include <cstring>

#include <Eigen/Dense>

#include "gpcorr/gp.hpp"
#include "gpcorr/harness.hpp"

namespace gpcorr_test {

/// Planned-location model of trial `trial` of the default 1D experiment.
inline gpcorr::TrainedModel one_d_model(int trial = 0) {
  const auto cfg = gpcorr::harness::ExperimentConfig::one_d_defaults();
  const auto inst = gpcorr::harness::make_instance(cfg, trial);
  return gpcorr::train(gpcorr::TrainingSet(inst.planned, inst.y), gpcorr::TestGrid(inst.test), cfg.hp);
}

inline bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

inline double rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = b.cwiseAbs().maxCoeff();
  return (a - b).cwiseAbs().maxCoeff() / (scale > 0.0 ? scale : 1.0);
}

inline gpcorr::Points column(std::initializer_list<double> v) {
  gpcorr::Points p(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index r = 0;
  for (double x : v) p(r++, 0) = x;
  return p;
}

}  // namespace gpcorr_test

#endif  // GPCORR_TESTS_SUPPORT_FIXTURES_HPP
