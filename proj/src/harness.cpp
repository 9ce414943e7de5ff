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

#include "gpcorr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "gpcorr/errors.hpp"

namespace gpcorr::harness {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::one_d:
      return "one_d";
    case ExperimentKind::two_d:
      return "two_d";
    case ExperimentKind::custom:
      return "custom";
  }
  return "?";
}

std::string_view to_string(FieldId f) {
  switch (f) {
    case FieldId::f1:
      return "f1";
    case FieldId::f2:
      return "f2";
    case FieldId::f2_swapped:
      return "f2_swapped";
  }
  return "?";
}

std::string_view to_string(PerturbationKind p) {
  switch (p) {
    case PerturbationKind::iid_gaussian:
      return "iid_gaussian";
    case PerturbationKind::constant_offset:
      return "constant_offset";
    case PerturbationKind::file:
      return "file";
  }
  return "?";
}

ExperimentKind parse_kind(std::string_view s) {
  if (s == "one_d") return ExperimentKind::one_d;
  if (s == "two_d") return ExperimentKind::two_d;
  if (s == "custom") return ExperimentKind::custom;
  throw InputError(fmt::format("unknown experiment kind '{}' (expected one_d, two_d or custom)", s));
}

FieldId parse_field(std::string_view s) {
  if (s == "f1") return FieldId::f1;
  if (s == "f2") return FieldId::f2;
  if (s == "f2_swapped") return FieldId::f2_swapped;
  throw InputError(fmt::format("unknown field '{}' (expected f1, f2 or f2_swapped)", s));
}

PerturbationKind parse_perturbation(std::string_view s) {
  if (s == "iid_gaussian") return PerturbationKind::iid_gaussian;
  if (s == "constant_offset") return PerturbationKind::constant_offset;
  if (s == "file") return PerturbationKind::file;
  throw InputError(fmt::format("unknown perturbation model '{}' (expected iid_gaussian, constant_offset or file)", s));
}

double field_value(FieldId f, PointRef x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (f) {
    case FieldId::f1:
      return 2.0 + std::sin(two_pi * x[0]);
    case FieldId::f2:
      return std::sin(two_pi * x[0]) * std::cos(two_pi * x[1]);
    case FieldId::f2_swapped:
      return std::cos(two_pi * x[0]) * std::sin(two_pi * x[1]);
  }
  return 0.0;
}

VectorXd field_values(FieldId f, const Points& x) {
  VectorXd v(x.rows());
  for (Index r = 0; r < x.rows(); ++r) v[r] = field_value(f, x.row(r));
  return v;
}

Points unit_grid(Index per_axis, Index n) {
  if (per_axis < 1) throw InputError("grid needs at least one point per axis");
  if (n != 1 && n != 2) throw InputError(fmt::format("grids are only defined for n = 1 or 2, got {}", n));
  VectorXd g = VectorXd::Zero(1);
  if (per_axis > 1) g = VectorXd::LinSpaced(per_axis, 0.0, 1.0);
  if (n == 1) return g;
  Points out(per_axis * per_axis, 2);
  for (Index a = 0; a < per_axis; ++a) {
    for (Index b = 0; b < per_axis; ++b) {
      out(a * per_axis + b, 0) = g[a];
      out(a * per_axis + b, 1) = g[b];
    }
  }
  return out;
}

ExperimentConfig ExperimentConfig::one_d_defaults() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::two_d_defaults() {
  ExperimentConfig c;
  c.kind = ExperimentKind::two_d;
  c.field = FieldId::f2;
  c.train_count = 6;
  c.test_count = 10;
  c.dim = 2;
  c.hp = Hyperparams{1.0, 0.2, 0.01};
  c.perturbation = PerturbationKind::constant_offset;
  c.offset = Eigen::Vector2d(0.1, 0.0);
  c.trials = 1;
  return c;
}

Index ExperimentConfig::num_train() const {
  return kind == ExperimentKind::two_d ? train_count * train_count : train_count;
}

Index ExperimentConfig::num_test() const {
  return kind == ExperimentKind::two_d ? test_count * test_count : test_count;
}

std::string ExperimentConfig::prefix() const { return std::string(to_string(kind)); }

void ExperimentConfig::validate() const {
  hp.validate();
  if (train_count < 1 || test_count < 1) throw InputError("train_count and test_count must be >= 1");
  if (kind == ExperimentKind::one_d && dim != 1) throw InputError("one_d experiments have dim = 1");
  if (kind == ExperimentKind::two_d && dim != 2) throw InputError("two_d experiments have dim = 2");
  if (dim < 1) throw InputError("dim must be >= 1");
  if (field != FieldId::f1 && dim < 2) {
    throw InputError(fmt::format("field {} needs dim >= 2", to_string(field)));
  }
  if (trials < 1) throw InputError(fmt::format("trials must be >= 1, got {}", trials));
  if (order != 1 && order != 2) throw InputError(fmt::format("order must be 1 or 2, got {}", order));
  if (perturbation == PerturbationKind::iid_gaussian && !(sigma_loc >= 0.0 && std::isfinite(sigma_loc))) {
    throw InputError("sigma_loc must be finite and non-negative");
  }
  if (perturbation == PerturbationKind::constant_offset && offset.size() != dim) {
    throw InputError(fmt::format("offset has {} components, expected {}", offset.size(), dim));
  }
  if (perturbation == PerturbationKind::file && perturbation_file.empty()) {
    throw InputError("perturbation model 'file' needs perturbation_file");
  }
}

namespace {

std::mt19937_64 substream(std::uint64_t seed, std::uint32_t stream, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, index};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kStreamDeltas = 1;
constexpr std::uint32_t kStreamLayout = 2;
constexpr std::uint32_t kStreamSubset = 3;

MatrixXd read_matrix_csv(const std::filesystem::path& path, Index rows, Index cols) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("cannot open perturbation file '{}'", path.string()));
  MatrixXd out(rows, cols);
  Index r = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (r >= rows) throw InputError(fmt::format("'{}' has more than {} data rows", path.string(), rows));
    std::stringstream ss(line);
    std::string cell;
    Index c = 0;
    while (std::getline(ss, cell, ',')) {
      if (c >= cols) throw InputError(fmt::format("'{}' line {}: more than {} columns", path.string(), line_no, cols));
      try {
        std::size_t used = 0;
        out(r, c) = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw InputError(fmt::format("'{}' line {}: '{}' is not a number", path.string(), line_no, cell));
      }
      ++c;
    }
    if (c != cols) throw InputError(fmt::format("'{}' line {}: expected {} columns", path.string(), line_no, cols));
    ++r;
  }
  if (r != rows) throw InputError(fmt::format("'{}' has {} data rows, expected {}", path.string(), r, rows));
  return out;
}

MatrixXd draw_deltas(const ExperimentConfig& cfg, Index T, int trial) {
  switch (cfg.perturbation) {
    case PerturbationKind::iid_gaussian: {
      auto rng = substream(cfg.seed, kStreamDeltas, static_cast<std::uint32_t>(trial));
      std::normal_distribution<double> gauss(0.0, 1.0);
      MatrixXd d(T, cfg.dim);
      for (Index k = 0; k < d.size(); ++k) d.data()[k] = cfg.sigma_loc * gauss(rng);
      return d;
    }
    case PerturbationKind::constant_offset:
      return cfg.offset.transpose().replicate(T, 1);
    case PerturbationKind::file:
      return read_matrix_csv(cfg.perturbation_file, T, cfg.dim);
  }
  return MatrixXd::Zero(T, cfg.dim);
}

double declared_delta_max(const ExperimentConfig& cfg, const MatrixXd& deltas) {
  double observed = 0.0;
  for (Index i = 0; i < deltas.rows(); ++i) observed = std::max(observed, deltas.row(i).norm());
  if (cfg.perturbation == PerturbationKind::iid_gaussian) {
    return std::max(4.0 * cfg.sigma_loc * std::sqrt(static_cast<double>(cfg.dim)), observed);
  }
  return observed;
}

TrainedModel train_instance(const ExperimentConfig& cfg, const Instance& inst) {
  return train(TrainingSet(inst.planned, inst.y), TestGrid(inst.test), cfg.hp);
}

CorrectionOperators offline_phase(const ExperimentConfig& cfg, const TrainedModel& base) {
  const PrecomputeOptions popts{cfg.storage, cfg.scalar_budget, 0};
  if (cfg.cache && std::filesystem::exists(*cfg.cache)) return load_operators(*cfg.cache, base);
  CorrectionOperators ops = precompute(base, popts);
  if (cfg.cache) save_operators(ops, *cfg.cache);
  return ops;
}

VectorXd stddev(const MatrixXd& cov) { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
  out.close();
  if (!out) throw InputError(fmt::format("writing '{}' failed", path.string()));
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError(fmt::format("cannot create output directory '{}': {}", dir.string(), ec.message()));
}

}  // namespace

Instance make_instance(const ExperimentConfig& cfg, int trial) {
  cfg.validate();
  Instance inst;
  const Index T = cfg.num_train();
  switch (cfg.kind) {
    case ExperimentKind::one_d:
      inst.planned = unit_grid(cfg.train_count, 1);
      inst.test = unit_grid(cfg.test_count, 1);
      inst.deltas = draw_deltas(cfg, T, trial);
      inst.truth = inst.planned + inst.deltas;
      break;
    case ExperimentKind::two_d:
      // Sensors sit on the grid; the map believes they are offset from it.
      inst.truth = unit_grid(cfg.train_count, 2);
      inst.test = unit_grid(cfg.test_count, 2);
      inst.deltas = draw_deltas(cfg, T, trial);
      inst.planned = inst.truth - inst.deltas;
      break;
    case ExperimentKind::custom: {
      auto rng = substream(cfg.seed, kStreamLayout, 0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      inst.planned.resize(T, cfg.dim);
      inst.test.resize(cfg.test_count, cfg.dim);
      for (Index k = 0; k < inst.planned.size(); ++k) inst.planned.data()[k] = unit(rng);
      for (Index k = 0; k < inst.test.size(); ++k) inst.test.data()[k] = unit(rng);
      inst.deltas = draw_deltas(cfg, T, trial);
      inst.truth = inst.planned + inst.deltas;
      break;
    }
  }
  inst.y = field_values(cfg.field, inst.truth);
  inst.delta_max = declared_delta_max(cfg, inst.deltas);
  return inst;
}

double error_norm(const VectorXd& prediction, const VectorXd& truth) { return (truth - prediction).norm(); }

Improvement improvement(double before, double after) {
  if (before == 0.0) return Improvement{0.0, false};
  return Improvement{100.0 * (before - after) / before, true};
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;

  const Instance first = make_instance(cfg, 0);
  std::optional<CorrectionOperators> ops;
  ops.emplace(offline_phase(cfg, train_instance(cfg, first)));

  CorrectionOptions copts;
  copts.order = cfg.order;
  copts.schedule = cfg.schedule;
  copts.psd_project = cfg.psd_project;
  copts.report_definiteness = true;

  for (int t = 0; t < cfg.trials; ++t) {
    const Instance inst = t == 0 ? first : make_instance(cfg, t);
    const TrainedModel base = train_instance(cfg, inst);
    if (base.location_fingerprint() != ops->location_fingerprint()) {
      ops.emplace(precompute(base, PrecomputeOptions{cfg.storage, cfg.scalar_budget, 0}));
    }
    const PerturbationSet pert = PerturbationSet::from_rows(inst.deltas, inst.delta_max);
    const CorrectedPosterior corr = correct(*ops, base, pert, copts);
    const Moments ideal = predict_at(base, inst.truth);
    const VectorXd y_true = field_values(cfg.field, inst.test);

    TrialResult tr;
    tr.trial = t;
    tr.error_corrupted = error_norm(base.mean_hat(), y_true);
    tr.error_corrected = error_norm(corr.mean, y_true);
    tr.error_ideal = error_norm(ideal.mean, y_true);
    tr.improvement = improvement(tr.error_corrupted, tr.error_corrected);
    tr.cov_error_corrupted = (base.cov_hat() - ideal.cov).norm();
    tr.cov_error_corrected = (corr.cov - ideal.cov).norm();
    tr.min_eigenvalue = corr.min_eigenvalue.value_or(0.0);
    tr.indefinite = corr.indefinite();
    res.trials.push_back(tr);

    if (t == 0) {
      res.points.test = inst.test;
      res.points.y_true = y_true;
      res.points.mean_corrupted = base.mean_hat();
      res.points.mean_corrected = corr.mean;
      res.points.mean_ideal = ideal.mean;
      res.points.std_corrupted = stddev(base.cov_hat());
      res.points.std_corrected = stddev(corr.cov);
    }
  }

  ExperimentSummary& s = res.summary;
  s.trials = cfg.trials;
  std::vector<double> pct;
  for (const auto& tr : res.trials) {
    s.wins += tr.error_corrected < tr.error_corrupted ? 1 : 0;
    s.mean_error_corrupted += tr.error_corrupted;
    s.mean_error_corrected += tr.error_corrected;
    s.mean_error_ideal += tr.error_ideal;
    s.indefinite_trials += tr.indefinite ? 1 : 0;
    if (tr.improvement.defined) {
      pct.push_back(tr.improvement.percent);
    } else {
      ++s.undefined_improvements;
    }
  }
  const double nt = static_cast<double>(cfg.trials);
  s.mean_error_corrupted /= nt;
  s.mean_error_corrected /= nt;
  s.mean_error_ideal /= nt;
  if (!pct.empty()) {
    s.mean_improvement = std::accumulate(pct.begin(), pct.end(), 0.0) / static_cast<double>(pct.size());
    if (pct.size() > 1) {
      double ss = 0.0;
      for (double p : pct) ss += (p - s.mean_improvement) * (p - s.mean_improvement);
      s.stddev_improvement = std::sqrt(ss / static_cast<double>(pct.size() - 1));
    }
  }
  return res;
}

ExperimentResult run_experiment_1d(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::one_d) throw InputError("run_experiment_1d needs kind = one_d");
  return run_experiment(cfg);
}

ExperimentResult run_experiment_2d(const ExperimentConfig& cfg) {
  if (cfg.kind != ExperimentKind::two_d) throw InputError("run_experiment_2d needs kind = two_d");
  return run_experiment(cfg);
}

std::vector<std::filesystem::path> write_experiment_csv(const ExperimentResult& result,
                                                        const std::filesystem::path& dir) {
  ensure_dir(dir);
  const std::string prefix = result.config.prefix();
  const PointTable& p = result.points;
  const Index n = p.test.cols();

  std::string pts = "# gpcorr points v1\n";
  for (Index d = 0; d < n; ++d) pts += n == 1 ? "x_test," : fmt::format("x_test_{},", d);
  pts +=
      "y_true,y_pred_corrupted,y_pred_corrected,y_pred_ideal,std_corrupted,std_corrected,error_corrupted,"
      "error_corrected\n";
  for (Index e = 0; e < p.test.rows(); ++e) {
    for (Index d = 0; d < n; ++d) pts += num(p.test(e, d)) + ",";
    pts += fmt::format("{},{},{},{},{},{},{},{}\n", num(p.y_true[e]), num(p.mean_corrupted[e]),
                       num(p.mean_corrected[e]), num(p.mean_ideal[e]), num(p.std_corrupted[e]),
                       num(p.std_corrected[e]), num(std::abs(p.mean_corrupted[e] - p.y_true[e])),
                       num(std::abs(p.mean_corrected[e] - p.y_true[e])));
  }

  std::string trials = "# gpcorr trials v1\n";
  trials +=
      "trial,error_norm_corrupted,error_norm_corrected,error_norm_ideal,improvement_pct,improvement_defined,"
      "cov_error_corrupted,cov_error_corrected,min_eigenvalue_corrected\n";
  for (const auto& t : result.trials) {
    trials += fmt::format("{},{},{},{},{},{},{},{},{}\n", t.trial, num(t.error_corrupted), num(t.error_corrected),
                          num(t.error_ideal), num(t.improvement.percent), t.improvement.defined ? 1 : 0,
                          num(t.cov_error_corrupted), num(t.cov_error_corrected), num(t.min_eigenvalue));
  }

  const ExperimentSummary& s = result.summary;
  const Improvement of_means = improvement(s.mean_error_corrupted, s.mean_error_corrected);
  std::string summary = "# gpcorr summary v1\nkey,value\n";
  summary += fmt::format("trials,{}\n", s.trials);
  summary += fmt::format("wins,{}\n", s.wins);
  summary += fmt::format("mean_error_norm_corrupted,{}\n", num(s.mean_error_corrupted));
  summary += fmt::format("mean_error_norm_corrected,{}\n", num(s.mean_error_corrected));
  summary += fmt::format("mean_error_norm_ideal,{}\n", num(s.mean_error_ideal));
  summary += fmt::format("mean_improvement_pct,{}\n", num(s.mean_improvement));
  summary += fmt::format("stddev_improvement_pct,{}\n", num(s.stddev_improvement));
  summary += fmt::format("improvement_of_mean_norms_pct,{}\n", num(of_means.percent));
  summary += fmt::format("undefined_improvements,{}\n", s.undefined_improvements);
  summary += fmt::format("indefinite_trials,{}\n", s.indefinite_trials);

  std::vector<std::filesystem::path> paths = {dir / (prefix + "_points.csv"), dir / (prefix + "_trials.csv"),
                                              dir / (prefix + "_summary.csv")};
  write_text(paths[0], pts);
  write_text(paths[1], trials);
  write_text(paths[2], summary);
  return paths;
}

namespace {

using clock_type = std::chrono::steady_clock;

// Median seconds per call over `samples` samples of `reps` calls each.
template <class F>
double median_seconds(F&& fn, int samples, double min_sample_seconds) {
  auto once = [&](int reps) {
    const auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double>(clock_type::now() - t0).count();
  };
  const double single = std::max(once(1), 1e-9);
  const int reps = std::max(1, static_cast<int>(std::ceil(min_sample_seconds / single)));
  std::vector<double> times(static_cast<std::size_t>(samples));
  for (auto& t : times) t = once(reps) / reps;
  std::nth_element(times.begin(), times.begin() + samples / 2, times.end());
  double med = times[static_cast<std::size_t>(samples / 2)];
  if (samples % 2 == 0) {
    med = 0.5 * (med + *std::max_element(times.begin(), times.begin() + samples / 2));
  }
  return med;
}

volatile double timing_sink = 0.0;

}  // namespace

TimingRow run_timing(const ExperimentConfig& cfg, std::optional<Index> subset, double min_sample_seconds) {
  cfg.validate();
  const Instance inst = make_instance(cfg, 0);
  const TrainedModel base = train_instance(cfg, inst);
  const Index T = base.num_train();

  TimingRow row;
  row.T = T;
  row.M = base.num_test();
  row.n = base.dim();

  const auto t0 = clock_type::now();
  const CorrectionOperators ops = precompute(base, PrecomputeOptions{cfg.storage, cfg.scalar_budget, 0});
  row.offline_seconds = std::chrono::duration<double>(clock_type::now() - t0).count();

  std::vector<Index> chosen(static_cast<std::size_t>(T));
  std::iota(chosen.begin(), chosen.end(), Index{0});
  if (subset) {
    if (*subset < 1 || *subset > T) throw InputError(fmt::format("subset must be in [1, {}], got {}", T, *subset));
    auto rng = substream(cfg.seed, kStreamSubset, 0);
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(static_cast<std::size_t>(*subset));
    std::sort(chosen.begin(), chosen.end());
  }
  PerturbationSet pert(T, base.dim(), inst.delta_max);
  for (Index i : chosen) pert.set(i, inst.deltas.row(i).transpose());
  row.K = pert.size();
  const Points moved = base.training().locations + pert.to_dense();

  row.label = fmt::format("{} T={} K={}", cfg.prefix(), T, row.K);
  row.retrain_median = median_seconds([&] { timing_sink = timing_sink + predict_at(base, moved).mean[0]; },
                                      cfg.trials, min_sample_seconds);
  CorrectionOptions copts;
  copts.order = cfg.order;
  row.correction_median = median_seconds(
      [&] { timing_sink = timing_sink + correct(ops, base, pert, copts).mean[0]; }, cfg.trials, min_sample_seconds);

  // The pairwise schedule is only timed when its block work stays small.
  const double K = static_cast<double>(row.K);
  const double M = static_cast<double>(row.M);
  const double n = static_cast<double>(row.n);
  const double blockwise_cost = K * K * n * n * (M * static_cast<double>(T) + M * M);
  if (blockwise_cost <= 2e7) {
    copts.schedule = Schedule::blockwise;
    row.blockwise_median = median_seconds(
        [&] { timing_sink = timing_sink + correct(ops, base, pert, copts).mean[0]; }, cfg.trials, min_sample_seconds);
  }
  return row;
}

ExperimentConfig large_timing_config() {
  ExperimentConfig c;
  c.kind = ExperimentKind::custom;
  c.field = FieldId::f2;
  c.train_count = 200;
  c.test_count = 100;
  c.dim = 2;
  c.hp = Hyperparams{1.0, 0.2, 0.01};
  c.perturbation = PerturbationKind::iid_gaussian;
  c.sigma_loc = 0.01;
  c.trials = 15;
  c.storage = StoragePolicy::lazy;
  return c;
}

std::string format_timing_table(const std::vector<TimingRow>& rows) {
  std::string out = fmt::format("{:<26} {:>12} {:>14} {:>14} {:>14} {:>9}\n", "case", "offline [s]", "retrain [s]",
                                "correct [s]", "blockwise [s]", "speedup");
  for (const auto& r : rows) {
    out += fmt::format("{:<26} {:>12.3e} {:>14.3e} {:>14.3e} {:>14} {:>9.1f}\n", r.label, r.offline_seconds,
                       r.retrain_median, r.correction_median,
                       r.blockwise_median ? fmt::format("{:.3e}", *r.blockwise_median) : std::string("skipped"),
                       r.speedup());
  }
  return out;
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::string out = "# gpcorr timing v1\ncase,T,M,n,K,offline_s,retrain_median_s,correction_median_s,"
                    "blockwise_median_s,speedup\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.label, r.T, r.M, r.n, r.K, num(r.offline_seconds),
                       num(r.retrain_median), num(r.correction_median),
                       r.blockwise_median ? num(*r.blockwise_median) : std::string(), num(r.speedup()));
  }
  write_text(path, out);
}

bool GradientReport::pass() const {
  return std::all_of(kinds.begin(), kinds.end(), [](const KindReport& k) { return k.failures == 0; });
}

namespace {

void record(KindReport& k, const oracle::Comparison& c, const std::string& where) {
  ++k.checks;
  if (!c.pass) ++k.failures;
  if (c.rel_error > k.worst_rel_error || k.checks == 1) {
    k.worst_rel_error = std::max(k.worst_rel_error, c.rel_error);
    k.worst_case = where;
  }
}

}  // namespace

GradientReport check_gradients(const GradientCheckConfig& cfg) {
  cfg.first_order.validate();
  cfg.second_order.validate();
  if (cfg.instances < 1 || cfg.kernel_pairs < 1) throw InputError("instances and kernel_pairs must be >= 1");

  GradientReport rep;
  for (const char* name : {"kernel_grad", "kernel_hess_second_second", "kernel_hess_first_second", "mean_jacobian",
                           "cov_jacobian", "mean_hessian", "cov_hessian"}) {
    KindReport k;
    k.name = name;
    rep.kinds.push_back(k);
  }
  KindReport& kgrad = rep.kinds[0];
  KindReport& khss = rep.kinds[1];
  KindReport& khfs = rep.kinds[2];
  KindReport& mj = rep.kinds[3];
  KindReport& cj = rep.kinds[4];
  KindReport& mh = rep.kinds[5];
  KindReport& ch = rep.kinds[6];

  const double r1 = cfg.first_order.rtol;
  const double a1 = cfg.first_order.atol;
  const double r2 = cfg.second_order.rtol;
  const double a2 = cfg.second_order.atol;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int p = 0; p < cfg.kernel_pairs; ++p) {
    const Index n = 1 + p % 3;
    const Hyperparams hp{0.5 + 1.5 * unit(rng), 0.2 + 0.8 * unit(rng), 0.0};
    Eigen::RowVectorXd a(n);
    Eigen::RowVectorXd b(n);
    for (Index d = 0; d < n; ++d) {
      a[d] = unit(rng);
      b[d] = unit(rng);
    }
    const std::string where = fmt::format("pair {} (n={})", p, n);
    record(kgrad,
           oracle::compare(kernel::grad_second_arg(a, b, hp), oracle::fd_kernel_grad(a, b, hp,
                                                                                      cfg.first_order.step_scale),
                           r1, a1),
           where);
    for (auto which : {kernel::HessianKind::second_second, kernel::HessianKind::first_second}) {
      record(which == kernel::HessianKind::second_second ? khss : khfs,
             oracle::compare(kernel::hess(a, b, hp, which),
                             oracle::fd_kernel_hess(a, b, hp, which, cfg.first_order.step_scale), r1, a1),
             where);
    }
  }

  for (int k = 0; k < cfg.instances; ++k) {
    const oracle::InstanceShape shape{1 + k % 6, 1 + (k / 3) % 5, 1 + (k / 6) % 3};
    const std::uint64_t seed = rng();
    const TrainedModel model = oracle::random_instance(seed, shape);
    const KernelGradSlices slices = build_kernel_grad_slices(model);
    const std::string tag = fmt::format("instance {} (T={}, M={}, n={})", k, shape.T, shape.M, shape.n);
    for (Index i = 0; i < shape.T; ++i) {
      const std::string wi = fmt::format("{} i={}", tag, i);
      record(mj, oracle::compare(mean_jacobian(model, slices, i), oracle::fd_mean_jacobian(model, i, cfg.first_order),
                                 r1, a1),
             wi);
      record(cj, oracle::compare(cov_jacobian(model, slices, i), oracle::fd_cov_jacobian(model, i, cfg.first_order),
                                 r1, a1),
             wi);
      for (Index j = 0; j < shape.T; ++j) {
        const std::string wij = fmt::format("{} i={} j={}", tag, i, j);
        record(mh,
               oracle::compare(mean_hessian(model, slices, i, j),
                               oracle::fd_mean_hessian(model, i, j, cfg.second_order), r2, a2),
               wij);
        record(ch,
               oracle::compare(cov_hessian(model, slices, i, j), oracle::fd_cov_hessian(model, i, j, cfg.second_order),
                               r2, a2),
               wij);
      }
    }
  }
  return rep;
}

std::string format_report(const GradientReport& report) {
  std::string out = fmt::format("{:<28} {:>7} {:>9} {:>14}  {}\n", "derivative", "checks", "failures",
                                "worst rel err", "worst case");
  for (const auto& k : report.kinds) {
    out += fmt::format("{:<28} {:>7} {:>9} {:>14.3e}  {}\n", k.name, k.checks, k.failures, k.worst_rel_error,
                       k.worst_case);
  }
  out += report.pass() ? "result: PASS\n" : "result: FAIL\n";
  return out;
}

}  // namespace gpcorr::harness
