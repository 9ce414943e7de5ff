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

#ifndef GPCORR_GP_HPP
#define GPCORR_GP_HPP

#include <cstdint>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpcorr/kernel.hpp"

namespace gpcorr {

/// Planned measurement locations (T x n) and the measurements associated with them.
struct TrainingSet {
  Points locations;
  Eigen::VectorXd measurements;

  TrainingSet() = default;
  /// Throws InputError if T == 0, n == 0 or the row counts disagree.
  TrainingSet(Points locations, Eigen::VectorXd measurements);

  Eigen::Index size() const { return locations.rows(); }
  Eigen::Index dim() const { return locations.cols(); }
};

/// Fixed test locations (M x n) where the posterior is evaluated.
struct TestGrid {
  Points locations;

  TestGrid() = default;
  explicit TestGrid(Points locations);

  Eigen::Index size() const { return locations.rows(); }
  Eigen::Index dim() const { return locations.cols(); }
};

/// Posterior mean (M) and covariance (M x M) at the test grid.
struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// A GP fitted once at the planned locations. Immutable after construction.
///
/// Caches K = K_TT + sigma_y^2 I as a Cholesky factor together with
/// c = K^{-1} Y, P = K_eT K^{-1} and the baseline moments
///   mean_hat = P Y,   cov_hat = K_ee - P K_eT^T (symmetrized).
class TrainedModel {
 public:
  const Hyperparams& hp() const { return hp_; }
  const TrainingSet& training() const { return train_; }
  const TestGrid& test() const { return test_; }

  Eigen::Index num_train() const { return train_.size(); }
  Eigen::Index num_test() const { return test_.size(); }
  Eigen::Index dim() const { return train_.dim(); }

  const Eigen::MatrixXd& K_ee() const { return K_ee_; }
  const Eigen::MatrixXd& K_eT() const { return K_eT_; }
  const Eigen::LLT<Eigen::MatrixXd>& factor() const { return factor_; }
  const Eigen::VectorXd& c() const { return c_; }
  const Eigen::MatrixXd& P() const { return P_; }
  const Eigen::VectorXd& mean_hat() const { return mean_hat_; }
  const Eigen::MatrixXd& cov_hat() const { return cov_hat_; }

  /// Diagonal jitter that had to be added for the factorization to succeed (usually 0).
  double jitter() const { return jitter_; }

  /// Hash of hyperparameters, training locations and test locations.
  /// Measurements are excluded: derivative operators do not depend on them.
  std::uint64_t location_fingerprint() const { return fingerprint_; }

  /// Same locations and hyperparameters, different measurements.
  TrainedModel with_measurements(const Eigen::VectorXd& y) const;

 private:
  friend TrainedModel train(TrainingSet, TestGrid, const Hyperparams&);

  TrainedModel() = default;

  Hyperparams hp_;
  TrainingSet train_;
  TestGrid test_;
  Eigen::MatrixXd K_ee_;
  Eigen::MatrixXd K_eT_;
  Eigen::LLT<Eigen::MatrixXd> factor_;
  Eigen::VectorXd c_;
  Eigen::MatrixXd P_;
  Eigen::VectorXd mean_hat_;
  Eigen::MatrixXd cov_hat_;
  double jitter_ = 0.0;
  std::uint64_t fingerprint_ = 0;
};

/// Fits the GP. Throws InputError on inconsistent dimensions and ModelError
/// when K cannot be factorized (duplicate locations with sigma_y == 0, or a
/// failure that persists after one jittered retry).
TrainedModel train(TrainingSet train, TestGrid test, const Hyperparams& hp);

/// Full retraining at locations Z (same shape as the planned locations) with
/// the model's measurements, test grid and hyperparameters. Nothing cached in
/// the model is reused; every kernel matrix is rebuilt and refactorized.
Moments predict_at(const TrainedModel& model, const Points& Z);

/// FNV-1a over the raw bytes of the hyperparameters and both location sets.
std::uint64_t location_fingerprint(const Hyperparams& hp, const Points& train, const Points& test);

}  // namespace gpcorr

#endif  // GPCORR_GP_HPP
