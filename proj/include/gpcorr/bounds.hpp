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

#ifndef GPCORR_BOUNDS_HPP
#define GPCORR_BOUNDS_HPP

#include <cstdint>
#include <vector>

#include "gpcorr/gp.hpp"

namespace gpcorr {

inline constexpr int kDefaultMaxOrder = 20;

/// Bound on the stacked perturbation norm when every |delta_i| <= delta_max.
double stacked_delta_bound(double delta_max, Eigen::Index T);

/// Taylor remainder bound M_next * beta_total^(N+1) / (N+1)!, evaluated in log space.
double remainder_bound(int order, double beta_total, double m_next);

/// Smallest order N in [0, max_order] whose remainder bound is <= epsilon.
///
/// m_bounds[N] bounds the derivative tensor of order N + 1 (the one that
/// enters the remainder of an order-N expansion). Orders beyond the end of
/// m_bounds are not considered. Throws BoundUnsatisfiable carrying the best
/// bound found when no order qualifies.
int min_order(double epsilon, double beta_total, const std::vector<double>& m_bounds,
              int max_order = kDefaultMaxOrder);

struct RemainderBudget {
  double epsilon = 0.0;
  double delta_max = 0.0;
  Eigen::Index T = 0;
  std::vector<double> m_bounds;

  double beta_total() const { return stacked_delta_bound(delta_max, T); }
  int min_order(int max_order = kDefaultMaxOrder) const;
};

/// Directional derivative of order 1, 2 or 3 of the retrained mean at
/// locations Z along the stacked direction u (T x n), by central finite
/// differences with step h. Returns an M-vector.
Eigen::VectorXd directional_mean_derivative(const TrainedModel& model, const Points& Z, const Points& u, int order,
                                            double h);

/// Sampled estimate of sup |D^order m[u, ..., u]| over unit directions u and
/// locations in the box X_hat +/- delta_max (per coordinate).
///
/// This is a lower estimate of the true supremum, not a certified bound.
/// Deterministic for a fixed seed.
double estimate_gradient_norm(const TrainedModel& model, int order, int probes, std::uint64_t seed,
                              double delta_max = 0.0);

}  // namespace gpcorr

#endif  // GPCORR_BOUNDS_HPP
