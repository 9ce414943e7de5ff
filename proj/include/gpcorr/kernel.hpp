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

#ifndef GPCORR_KERNEL_HPP
#define GPCORR_KERNEL_HPP

#include <Eigen/Dense>

namespace gpcorr {

/// Rows of a Points matrix are locations; columns are coordinates.
using Points = Eigen::MatrixXd;

/// A single location. Binds to rows of a column-major matrix without copying.
using PointRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

/// Squared-exponential kernel hyperparameters.
///
/// alpha is the signal standard deviation (so alpha^2 is the signal
/// variance), beta the lengthscale, sigma_y the measurement-noise standard
/// deviation added to the training Gram diagonal as sigma_y^2.
struct Hyperparams {
  double alpha = 1.0;
  double beta = 1.0;
  double sigma_y = 0.0;

  /// Throws InputError unless alpha > 0, beta > 0 and sigma_y >= 0.
  void validate() const;

  double signal_variance() const { return alpha * alpha; }
  double noise_variance() const { return sigma_y * sigma_y; }
};

namespace kernel {

enum class HessianKind {
  second_second,  ///< d^2 k / db db^T
  first_second,   ///< d^2 k / da db^T
};

/// k(a, b) = alpha^2 exp(-|a - b|^2 / (2 beta^2)).
///
/// Far-apart arguments underflow to 0.0; that is returned as is.
double eval(PointRef a, PointRef b, const Hyperparams& hp);

/// Gradient of k(a, b) with respect to b: (a - b) k(a, b) / beta^2.
/// The gradient with respect to a is its negation.
Eigen::VectorXd grad_second_arg(PointRef a, PointRef b, const Hyperparams& hp);

/// Second derivatives of k.
///   second_second: k [ (a-b)(a-b)^T / beta^4 - I / beta^2 ]
///   first_second:  k [ I / beta^2 - (a-b)(a-b)^T / beta^4 ]
/// Since k depends on a - b only, d^2k/da da^T equals the second_second form.
Eigen::MatrixXd hess(PointRef a, PointRef b, const Hyperparams& hp, HessianKind which);

/// Dense Gram block K[r, s] = k(a_r, b_s).
Eigen::MatrixXd matrix(const Points& a, const Points& b, const Hyperparams& hp);

/// Symmetric Gram matrix of one point set; only half the kernel calls.
Eigen::MatrixXd gram(const Points& x, const Hyperparams& hp);

namespace testing {

/// Flips the sign of grad_second_arg on the current thread while alive.
/// Used to check that the gradient checker notices a broken derivative.
class ScopedGradientSignFlip {
 public:
  ScopedGradientSignFlip();
  ~ScopedGradientSignFlip();
  ScopedGradientSignFlip(const ScopedGradientSignFlip&) = delete;
  ScopedGradientSignFlip& operator=(const ScopedGradientSignFlip&) = delete;

 private:
  bool previous_;
};

}  // namespace testing
}  // namespace kernel
}  // namespace gpcorr

#endif  // GPCORR_KERNEL_HPP
