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

#include "gpcorr/gp.hpp"

#include <cstring>
#include <string>
#include <utility>

#include "gpcorr/errors.hpp"

namespace gpcorr {

namespace {

constexpr double kJitterScale = 1e-10;

void fnv1a(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    h ^= p[k];
    h *= 1099511628211ULL;
  }
}

void reject_duplicates(const Points& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index s = r + 1; s < x.rows(); ++s) {
      if (x.row(r) == x.row(s)) {
        throw ModelError("training locations " + std::to_string(r) + " and " + std::to_string(s) +
                         " coincide while sigma_y == 0; the Gram matrix is singular");
      }
    }
  }
}

}  // namespace

TrainingSet::TrainingSet(Points locs, Eigen::VectorXd y) : locations(std::move(locs)), measurements(std::move(y)) {
  if (locations.rows() == 0) throw InputError("training set must contain at least one location");
  if (locations.cols() == 0) throw InputError("training locations must have dimension >= 1");
  if (measurements.size() != locations.rows()) {
    throw InputError("training set has " + std::to_string(locations.rows()) + " locations but " +
                     std::to_string(measurements.size()) + " measurements");
  }
}

TestGrid::TestGrid(Points locs) : locations(std::move(locs)) {
  if (locations.rows() == 0) throw InputError("test grid must contain at least one location");
  if (locations.cols() == 0) throw InputError("test locations must have dimension >= 1");
}

std::uint64_t location_fingerprint(const Hyperparams& hp, const Points& train, const Points& test) {
  std::uint64_t h = 14695981039346656037ULL;
  const double params[3] = {hp.alpha, hp.beta, hp.sigma_y};
  fnv1a(h, params, sizeof(params));
  const std::int64_t shape[4] = {train.rows(), train.cols(), test.rows(), test.cols()};
  fnv1a(h, shape, sizeof(shape));
  fnv1a(h, train.data(), sizeof(double) * static_cast<std::size_t>(train.size()));
  fnv1a(h, test.data(), sizeof(double) * static_cast<std::size_t>(test.size()));
  return h;
}

TrainedModel train(TrainingSet train_set, TestGrid test, const Hyperparams& hp) {
  hp.validate();
  if (train_set.size() == 0) throw InputError("training set must contain at least one location");
  if (test.size() == 0) throw InputError("test grid must contain at least one location");
  if (train_set.dim() != test.dim()) {
    throw InputError("training locations have dimension " + std::to_string(train_set.dim()) +
                     " but test locations have dimension " + std::to_string(test.dim()));
  }
  if (train_set.measurements.size() != train_set.size()) {
    throw InputError("training set has mismatched measurement count");
  }
  if (hp.sigma_y == 0.0) reject_duplicates(train_set.locations);

  TrainedModel m;
  m.hp_ = hp;
  const auto t = train_set.size();

  Eigen::MatrixXd K = kernel::gram(train_set.locations, hp);
  K.diagonal().array() += hp.noise_variance();
  m.factor_.compute(K);
  if (m.factor_.info() != Eigen::Success) {
    m.jitter_ = kJitterScale * hp.signal_variance();
    K.diagonal().array() += m.jitter_;
    m.factor_.compute(K);
    if (m.factor_.info() != Eigen::Success) {
      throw ModelError("training Gram matrix (T=" + std::to_string(t) +
                       ") is not numerically positive definite, even after adding jitter " +
                       std::to_string(m.jitter_));
    }
  }

  m.K_ee_ = kernel::gram(test.locations, hp);
  m.K_eT_ = kernel::matrix(test.locations, train_set.locations, hp);
  m.c_ = m.factor_.solve(train_set.measurements);
  m.P_ = m.factor_.solve(m.K_eT_.transpose()).transpose();
  m.mean_hat_ = m.P_ * train_set.measurements;
  Eigen::MatrixXd cov = m.K_ee_ - m.P_ * m.K_eT_.transpose();
  m.cov_hat_ = 0.5 * (cov + cov.transpose());

  m.fingerprint_ = location_fingerprint(hp, train_set.locations, test.locations);
  m.train_ = std::move(train_set);
  m.test_ = std::move(test);
  return m;
}

TrainedModel TrainedModel::with_measurements(const Eigen::VectorXd& y) const {
  return train(TrainingSet(train_.locations, y), test_, hp_);
}

Moments predict_at(const TrainedModel& model, const Points& Z) {
  if (Z.rows() != model.num_train() || Z.cols() != model.dim()) {
    throw InputError("predict_at: locations must be " + std::to_string(model.num_train()) + "x" +
                     std::to_string(model.dim()) + ", got " + std::to_string(Z.rows()) + "x" +
                     std::to_string(Z.cols()));
  }
  TrainedModel fresh = train(TrainingSet(Z, model.training().measurements), model.test(), model.hp());
  return Moments{fresh.mean_hat(), fresh.cov_hat()};
}

}  // namespace gpcorr
