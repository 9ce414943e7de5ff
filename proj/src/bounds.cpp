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

#include "gpcorr/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/format.h>

#include "gpcorr/errors.hpp"

namespace gpcorr {

double stacked_delta_bound(double delta_max, Eigen::Index T) {
  if (!(delta_max >= 0.0) || !std::isfinite(delta_max)) {
    throw InputError(fmt::format("delta_max must be finite and non-negative, got {}", delta_max));
  }
  if (T < 1) throw InputError(fmt::format("point count must be >= 1, got {}", T));
  return delta_max * std::sqrt(static_cast<double>(T));
}

double remainder_bound(int order, double beta_total, double m_next) {
  if (order < 0) throw InputError(fmt::format("Taylor order must be >= 0, got {}", order));
  if (!(beta_total >= 0.0)) throw InputError("stacked perturbation bound must be non-negative");
  if (!(m_next >= 0.0)) throw InputError("derivative bound must be non-negative");
  if (beta_total == 0.0 || m_next == 0.0) return 0.0;
  const double k = static_cast<double>(order) + 1.0;
  return std::exp(std::log(m_next) + k * std::log(beta_total) - std::lgamma(k + 1.0));
}

int min_order(double epsilon, double beta_total, const std::vector<double>& m_bounds, int max_order) {
  if (!(epsilon > 0.0)) throw InputError(fmt::format("requested accuracy must be positive, got {}", epsilon));
  if (m_bounds.empty()) throw InputError("at least one derivative bound is required");
  if (max_order < 0) throw InputError("maximum order must be >= 0");
  const int last = std::min(max_order, static_cast<int>(m_bounds.size()) - 1);
  double best = std::numeric_limits<double>::infinity();
  int best_order = 0;
  for (int N = 0; N <= last; ++N) {
    const double b = remainder_bound(N, beta_total, m_bounds[static_cast<std::size_t>(N)]);
    if (b <= epsilon) return N;
    if (b < best) {
      best = b;
      best_order = N;
    }
  }
  throw BoundUnsatisfiable(fmt::format("no Taylor order up to {} reaches accuracy {} (best bound {} at order {})",
                                       last, epsilon, best, best_order),
                           best, best_order);
}

int RemainderBudget::min_order(int max_order) const {
  return gpcorr::min_order(epsilon, beta_total(), m_bounds, max_order);
}

Eigen::VectorXd directional_mean_derivative(const TrainedModel& model, const Points& Z, const Points& u, int order,
                                            double h) {
  if (u.rows() != Z.rows() || u.cols() != Z.cols()) throw InputError("direction must have the shape of Z");
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  auto f = [&](double t) { return predict_at(model, Z + t * u).mean; };
  switch (order) {
    case 1:
      return (f(h) - f(-h)) / (2.0 * h);
    case 2:
      return (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
    case 3:
      return (f(2.0 * h) - 2.0 * f(h) + 2.0 * f(-h) - f(-2.0 * h)) / (2.0 * h * h * h);
    default:
      throw InputError(fmt::format("directional derivative order must be 1, 2 or 3, got {}", order));
  }
}

double estimate_gradient_norm(const TrainedModel& model, int order, int probes, std::uint64_t seed,
                              double delta_max) {
  if (order < 1 || order > 3) throw InputError(fmt::format("gradient order must be 1, 2 or 3, got {}", order));
  if (probes < 1) throw InputError("at least one probe is required");
  if (!(delta_max >= 0.0)) throw InputError("delta_max must be non-negative");

  // Steps balance truncation against the rounding noise of a full retrain.
  const double beta = model.hp().beta;
  const double h = order == 1 ? 1e-4 * beta : (order == 2 ? 1e-3 * beta : 2e-3 * beta);

  const Points& xhat = model.training().locations;
  double best = 0.0;
  for (int p = 0; p < probes; ++p) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(p)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> box(-delta_max, delta_max);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Points z = xhat;
    if (delta_max > 0.0) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z.data()[k] += box(rng);
    }
    Points u(xhat.rows(), xhat.cols());
    for (Eigen::Index k = 0; k < u.size(); ++k) u.data()[k] = gauss(rng);
    u /= u.norm();

    best = std::max(best, directional_mean_derivative(model, z, u, order, h).norm());
  }
  return best;
}

}  // namespace gpcorr
