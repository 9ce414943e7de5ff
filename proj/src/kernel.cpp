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

#include "gpcorr/kernel.hpp"

#include <cmath>
#include <string>

#include "gpcorr/errors.hpp"

namespace gpcorr {

void Hyperparams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InputError("hyperparameter alpha must be positive and finite, got " + std::to_string(alpha));
  }
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InputError("hyperparameter beta must be positive and finite, got " + std::to_string(beta));
  }
  if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y)) {
    throw InputError("hyperparameter sigma_y must be non-negative and finite, got " + std::to_string(sigma_y));
  }
}

namespace kernel {

namespace {

thread_local bool flip_gradient_sign = false;

void check_dims(PointRef a, PointRef b) {
  if (a.size() != b.size()) {
    throw InputError("kernel arguments have different dimensions (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
  if (a.size() == 0) {
    throw InputError("kernel arguments must have dimension >= 1");
  }
}

inline double squared_distance(PointRef a, PointRef b) {
  double r2 = 0.0;
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    r2 += diff * diff;
  }
  return r2;
}

}  // namespace

double eval(PointRef a, PointRef b, const Hyperparams& hp) {
  check_dims(a, b);
  const double scale = -1.0 / (2.0 * hp.beta * hp.beta);
  return hp.signal_variance() * std::exp(scale * squared_distance(a, b));
}

Eigen::VectorXd grad_second_arg(PointRef a, PointRef b, const Hyperparams& hp) {
  const double k = eval(a, b, hp);
  Eigen::VectorXd g = (a - b).transpose() * (k / (hp.beta * hp.beta));
  if (flip_gradient_sign) g = -g;
  return g;
}

Eigen::MatrixXd hess(PointRef a, PointRef b, const Hyperparams& hp, HessianKind which) {
  const double k = eval(a, b, hp);
  const double b2 = hp.beta * hp.beta;
  const Eigen::VectorXd diff = (a - b).transpose();
  const auto n = diff.size();
  Eigen::MatrixXd h(n, n);
  // Fill one triangle and mirror so the result is exactly symmetric.
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index s = r; s < n; ++s) {
      double v = diff[r] * diff[s] / (b2 * b2);
      if (r == s) v -= 1.0 / b2;
      v *= k;
      if (which == HessianKind::first_second) v = -v;
      h(r, s) = v;
      h(s, r) = v;
    }
  }
  return h;
}

Eigen::MatrixXd matrix(const Points& a, const Points& b, const Hyperparams& hp) {
  if (a.cols() != b.cols()) {
    throw InputError("kernel matrix: point sets have different dimensions (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  const double scale = -1.0 / (2.0 * hp.beta * hp.beta);
  const double var = hp.signal_variance();
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index s = 0; s < b.rows(); ++s) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      out(r, s) = var * std::exp(scale * squared_distance(a.row(r), b.row(s)));
    }
  }
  return out;
}

Eigen::MatrixXd gram(const Points& x, const Hyperparams& hp) {
  const double scale = -1.0 / (2.0 * hp.beta * hp.beta);
  const double var = hp.signal_variance();
  const auto t = x.rows();
  Eigen::MatrixXd out(t, t);
  for (Eigen::Index s = 0; s < t; ++s) {
    out(s, s) = var;
    for (Eigen::Index r = s + 1; r < t; ++r) {
      const double v = var * std::exp(scale * squared_distance(x.row(r), x.row(s)));
      out(r, s) = v;
      out(s, r) = v;
    }
  }
  return out;
}

namespace testing {

ScopedGradientSignFlip::ScopedGradientSignFlip() : previous_(flip_gradient_sign) { flip_gradient_sign = true; }

ScopedGradientSignFlip::~ScopedGradientSignFlip() { flip_gradient_sign = previous_; }

}  // namespace testing
}  // namespace kernel
}  // namespace gpcorr
