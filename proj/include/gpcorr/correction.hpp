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

#ifndef GPCORR_CORRECTION_HPP
#define GPCORR_CORRECTION_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "gpcorr/gp.hpp"
#include "gpcorr/operators.hpp"

namespace gpcorr {

/// Location errors delta_i = (true location) - (planned location) for a
/// subset of the training points. Absent indices have zero error.
class PerturbationSet {
 public:
  PerturbationSet(Eigen::Index num_train, Eigen::Index dim, double delta_max);

  /// Every row of `deltas` (T x n) becomes an entry, including zero rows.
  static PerturbationSet from_rows(const Eigen::MatrixXd& deltas, double delta_max);

  /// Throws IndexError for a bad index and InputError for a wrong length or
  /// a norm above delta_max.
  void set(Eigen::Index i, const Eigen::VectorXd& delta);

  const std::map<Eigen::Index, Eigen::VectorXd>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(entries_.size()); }
  Eigen::Index num_train() const { return num_train_; }
  Eigen::Index dim() const { return dim_; }
  double delta_max() const { return delta_max_; }

  /// T x n matrix with zero rows for absent indices.
  Eigen::MatrixXd to_dense() const;

  /// Every entry and delta_max multiplied by s >= 0.
  PerturbationSet scaled(double s) const;

 private:
  Eigen::Index num_train_;
  Eigen::Index dim_;
  double delta_max_;
  std::map<Eigen::Index, Eigen::VectorXd> entries_;
};

/// How the online sums are evaluated.
///
/// blockwise instantiates J_M^i = F^i Y and H_M^{i,j} = G^{i,j} Y and walks
/// every present (i, j) pair. fused contracts the same expressions with the
/// perturbations first, so only vectors of length M and T are formed per
/// index and the covariance update is a rank-2K product. Both give the same
/// result up to rounding.
enum class Schedule { fused, blockwise };

std::string_view to_string(Schedule s);
Schedule parse_schedule(std::string_view s);

struct CorrectionOptions {
  int order = 2;
  Schedule schedule = Schedule::fused;
  /// Clip negative eigenvalues of the corrected covariance to zero.
  bool psd_project = false;
  /// Compute the smallest eigenvalue of the corrected covariance.
  bool report_definiteness = false;
  /// Keep the first- and second-order increments separately.
  bool keep_terms = false;
};

struct CorrectionTerms {
  Eigen::VectorXd mean_first;
  Eigen::VectorXd mean_second;  // already scaled by 1/2
  Eigen::MatrixXd cov_first;
  Eigen::MatrixXd cov_second;   // already scaled by 1/2
};

struct CorrectedPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  int order_used = 0;
  std::optional<CorrectionTerms> terms;
  /// Smallest eigenvalue before any projection; set when requested.
  std::optional<double> min_eigenvalue;
  /// Largest eigenvalue magnitude; set together with min_eigenvalue.
  std::optional<double> max_abs_eigenvalue;
  bool psd_projected = false;
  double offline_seconds = 0.0;
  double online_seconds = 0.0;

  /// True when the smallest eigenvalue is below -1e-10 times the largest magnitude,
  /// so rounding noise on a singular covariance is not flagged.
  bool indefinite() const {
    return min_eigenvalue && max_abs_eigenvalue && *min_eigenvalue < -1e-10 * *max_abs_eigenvalue;
  }
};

/// Corrected mean M_hat + sum_i J_M^i delta_i (+ 1/2 sum_{i,j} delta_i^T H_M^{i,j} delta_j).
/// Throws ContractError when ops, base and pert describe different problems.
Eigen::VectorXd correct_mean(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                             int order, Schedule schedule = Schedule::fused);

/// Corrected covariance, symmetrized; optionally projected onto the PSD cone.
Eigen::MatrixXd correct_cov(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                            int order, Schedule schedule = Schedule::fused, bool psd_project = false);

/// Online phase for both moments. mean and cov equal correct_mean and
/// correct_cov bit for bit.
CorrectedPosterior correct(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                           const CorrectionOptions& opts = {});

struct Algorithm1Options {
  CorrectionOptions correction;
  PrecomputeOptions precompute;
  /// Loaded when the file exists; written after precompute otherwise.
  std::optional<std::filesystem::path> cache;
};

/// Offline phase (precompute or load) followed by the online correction,
/// with wall-clock time recorded for each.
CorrectedPosterior run_algorithm_1(const TrainedModel& base, const PerturbationSet& pert,
                                   const Algorithm1Options& opts = {});

/// Symmetric eigenvalue clipping at zero.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& cov);

}  // namespace gpcorr

#endif  // GPCORR_CORRECTION_HPP
