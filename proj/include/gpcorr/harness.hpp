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

#ifndef GPCORR_HARNESS_HPP
#define GPCORR_HARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpcorr/correction.hpp"
#include "gpcorr/oracle.hpp"

namespace gpcorr::harness {

enum class ExperimentKind { one_d, two_d, custom };
enum class FieldId { f1, f2, f2_swapped };
enum class PerturbationKind { iid_gaussian, constant_offset, file };

std::string_view to_string(ExperimentKind k);
std::string_view to_string(FieldId f);
std::string_view to_string(PerturbationKind p);
ExperimentKind parse_kind(std::string_view s);
FieldId parse_field(std::string_view s);
PerturbationKind parse_perturbation(std::string_view s);

/// f1(x) = 2 + sin(2 pi x0)
/// f2(x) = sin(2 pi x0) cos(2 pi x1)
/// f2_swapped(x) = cos(2 pi x0) sin(2 pi x1)
double field_value(FieldId f, PointRef x);
Eigen::VectorXd field_values(FieldId f, const Points& x);

/// Uniform tensor grid on [0, 1]^n with `per_axis` points per axis (n = 1 or 2).
/// Rows are ordered with the first coordinate outermost.
Points unit_grid(Eigen::Index per_axis, Eigen::Index n);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::one_d;
  FieldId field = FieldId::f1;
  /// Points per axis for one_d / two_d grids; point count for custom.
  Eigen::Index train_count = 11;
  Eigen::Index test_count = 100;
  Eigen::Index dim = 1;
  Hyperparams hp{1.0, 0.1, 0.01};
  PerturbationKind perturbation = PerturbationKind::iid_gaussian;
  double sigma_loc = 0.01;
  Eigen::VectorXd offset;
  std::filesystem::path perturbation_file;
  int trials = 100;
  std::uint64_t seed = 1;
  int order = 2;
  std::filesystem::path out_dir = "results";
  StoragePolicy storage = StoragePolicy::automatic;
  std::size_t scalar_budget = kDefaultScalarBudget;
  Schedule schedule = Schedule::fused;
  bool psd_project = false;
  std::optional<std::filesystem::path> cache;

  /// f1, 11 planned grid points, 100 test points, alpha 1, beta 0.1,
  /// sigma_y 0.01, iid N(0, 0.01^2) location errors, 100 trials.
  static ExperimentConfig one_d_defaults();
  /// f2, true locations on a 6 x 6 grid, 10 x 10 test grid, alpha 1,
  /// beta 0.2, sigma_y 0.01, constant offset (0.1, 0), one trial.
  static ExperimentConfig two_d_defaults();

  Eigen::Index num_train() const;
  Eigen::Index num_test() const;
  std::string prefix() const;

  /// Throws InputError on inconsistent settings.
  void validate() const;
};

/// One problem instance: planned and true locations, measurements, errors.
struct Instance {
  Points planned;
  Points truth;
  Points test;
  Eigen::VectorXd y;
  Eigen::MatrixXd deltas;  // truth - planned
  double delta_max = 0.0;
};

/// Trial `trial` of the configured experiment. Deterministic in (seed, trial).
Instance make_instance(const ExperimentConfig& cfg, int trial);

double error_norm(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth);

/// 100 (before - after) / before, or 0 with defined = false when before is 0.
struct Improvement {
  double percent = 0.0;
  bool defined = false;
};
Improvement improvement(double before, double after);

struct TrialResult {
  int trial = 0;
  double error_corrupted = 0.0;
  double error_corrected = 0.0;
  double error_ideal = 0.0;
  Improvement improvement;
  double cov_error_corrupted = 0.0;  // Frobenius distance to the retrained covariance
  double cov_error_corrected = 0.0;
  double min_eigenvalue = 0.0;
  bool indefinite = false;
};

struct PointTable {
  Points test;
  Eigen::VectorXd y_true;
  Eigen::VectorXd mean_corrupted;
  Eigen::VectorXd mean_corrected;
  Eigen::VectorXd mean_ideal;
  Eigen::VectorXd std_corrupted;
  Eigen::VectorXd std_corrected;
};

struct ExperimentSummary {
  int trials = 0;
  int wins = 0;  // trials with error_corrected < error_corrupted
  double mean_error_corrupted = 0.0;
  double mean_error_corrected = 0.0;
  double mean_error_ideal = 0.0;
  double mean_improvement = 0.0;
  double stddev_improvement = 0.0;
  int undefined_improvements = 0;
  int indefinite_trials = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  PointTable points;  // trial 0
  std::vector<TrialResult> trials;
  ExperimentSummary summary;
};

/// Runs every trial: corrupted baseline, correction, and full retrain.
/// Operators are built once (or loaded from cfg.cache) and reused across
/// trials, since they do not depend on the measurements.
ExperimentResult run_experiment(const ExperimentConfig& cfg);
ExperimentResult run_experiment_1d(const ExperimentConfig& cfg);
ExperimentResult run_experiment_2d(const ExperimentConfig& cfg);

/// Writes <prefix>_points.csv, <prefix>_trials.csv and <prefix>_summary.csv.
/// Contents depend only on the configuration, never on timing.
std::vector<std::filesystem::path> write_experiment_csv(const ExperimentResult& result,
                                                        const std::filesystem::path& dir);

struct TimingRow {
  std::string label;
  Eigen::Index T = 0;
  Eigen::Index M = 0;
  Eigen::Index n = 0;
  Eigen::Index K = 0;  // corrected points
  double offline_seconds = 0.0;
  double retrain_median = 0.0;
  double correction_median = 0.0;
  std::optional<double> blockwise_median;

  double speedup() const { return retrain_median / correction_median; }
};

/// Median wall-clock over cfg.trials samples of (a) predict_at at the true
/// locations and (b) the online correction with precomputed operators.
/// `subset` limits the perturbation to that many points. Samples repeat the
/// call until at least `min_sample_seconds` has elapsed.
TimingRow run_timing(const ExperimentConfig& cfg, std::optional<Eigen::Index> subset = std::nullopt,
                     double min_sample_seconds = 2e-3);

/// T = 200 random planned points in [0, 1]^2, 10 x 10 test grid, beta 0.2.
ExperimentConfig large_timing_config();

std::string format_timing_table(const std::vector<TimingRow>& rows);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);

struct GradientCheckConfig {
  int instances = 50;
  int kernel_pairs = 120;
  std::uint64_t seed = 1;
  oracle::FdConfig first_order{1e-5, 1e-6, 1e-10};
  oracle::FdConfig second_order{1e-5, 1e-5, 1e-10};
};

struct KindReport {
  std::string name;
  int checks = 0;
  int failures = 0;
  double worst_rel_error = 0.0;
  std::string worst_case;
};

struct GradientReport {
  std::vector<KindReport> kinds;
  bool pass() const;
};

/// Compares every analytic derivative with its finite-difference oracle on
/// seeded random instances (T in 1..6, M in 1..5, n in 1..3).
GradientReport check_gradients(const GradientCheckConfig& cfg);
std::string format_report(const GradientReport& report);

}  // namespace gpcorr::harness

#endif  // GPCORR_HARNESS_HPP
