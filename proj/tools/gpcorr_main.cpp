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

// gpcorr command-line tool: experiments, timing, gradient checks and
// operator caches. Exit status 0 on success, 1 when a check fails, 2 on bad
// input or I/O errors.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gpcorr/errors.hpp"
#include "gpcorr/harness.hpp"

namespace {

using gpcorr::harness::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInputError = 2;

struct Args {
  std::string kind;
  std::string field;
  long long train_count = 0;
  long long test_count = 0;
  long long dim = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double sigma_y = 0.0;
  std::string perturbation;
  double sigma_loc = 0.0;
  std::vector<double> offset;
  std::string perturbation_file;
  int trials = 0;
  std::uint64_t seed = 0;
  int order = 0;
  std::string out;
  std::string storage;
  std::string schedule;
  bool psd_project = false;
  std::string cache;
  std::size_t budget = 0;
  long long subset = 0;
  int instances = 0;
  int kernel_pairs = 0;
};

bool given(const CLI::App& app, const char* name) { return app.get_option(name)->count() > 0; }

void add_options(CLI::App& app, Args& a) {
  app.add_option("--kind", a.kind, "Experiment kind: one_d, two_d or custom");
  app.add_option("--field", a.field, "Scalar field: f1, f2 or f2_swapped");
  app.add_option("--train-count", a.train_count, "Training points (per axis for grid layouts)");
  app.add_option("--test-count", a.test_count, "Test points (per axis for grid layouts)");
  app.add_option("--dim", a.dim, "Location dimension for custom experiments");
  app.add_option("--alpha", a.alpha, "Kernel signal standard deviation");
  app.add_option("--beta", a.beta, "Kernel lengthscale");
  app.add_option("--sigma-y", a.sigma_y, "Measurement noise standard deviation");
  app.add_option("--perturbation", a.perturbation, "Location error model: iid_gaussian, constant_offset or file");
  app.add_option("--sigma-loc", a.sigma_loc, "Standard deviation of iid location errors");
  app.add_option("--offset", a.offset, "Constant location offset, one value per coordinate");
  app.add_option("--perturbation-file", a.perturbation_file, "CSV with one location error per row");
  app.add_option("--trials", a.trials, "Number of trials (timing: samples per measurement)");
  app.add_option("--seed", a.seed, "Random seed");
  app.add_option("--order", a.order, "Correction order, 1 or 2")->check(CLI::IsMember({1, 2}));
  app.add_option("--out", a.out, "Output directory");
  app.add_option("--storage", a.storage, "Operator storage: dense, lazy or auto");
  app.add_option("--schedule", a.schedule, "Online schedule: fused or blockwise");
  app.add_flag("--psd-project", a.psd_project, "Clip negative eigenvalues of the corrected covariance");
  app.add_option("--cache", a.cache, "Operator cache file");
  app.add_option("--budget", a.budget, "Scalar budget for dense operator storage");
  app.add_option("--subset", a.subset, "timing: number of perturbed points");
  app.add_option("--instances", a.instances, "check-gradients: random instances");
  app.add_option("--kernel-pairs", a.kernel_pairs, "check-gradients: random kernel argument pairs");
}

ExperimentConfig build_config(const CLI::App& app, const Args& a, ExperimentConfig cfg) {
  using namespace gpcorr;
  if (given(app, "--field")) cfg.field = harness::parse_field(a.field);
  if (given(app, "--train-count")) cfg.train_count = a.train_count;
  if (given(app, "--test-count")) cfg.test_count = a.test_count;
  if (given(app, "--dim")) cfg.dim = a.dim;
  if (given(app, "--alpha")) cfg.hp.alpha = a.alpha;
  if (given(app, "--beta")) cfg.hp.beta = a.beta;
  if (given(app, "--sigma-y")) cfg.hp.sigma_y = a.sigma_y;
  if (given(app, "--perturbation")) cfg.perturbation = harness::parse_perturbation(a.perturbation);
  if (given(app, "--sigma-loc")) cfg.sigma_loc = a.sigma_loc;
  if (given(app, "--offset")) cfg.offset = Eigen::Map<const Eigen::VectorXd>(a.offset.data(), a.offset.size());
  if (given(app, "--perturbation-file")) cfg.perturbation_file = a.perturbation_file;
  if (given(app, "--trials")) cfg.trials = a.trials;
  if (given(app, "--seed")) cfg.seed = a.seed;
  if (given(app, "--order")) cfg.order = a.order;
  if (given(app, "--out")) cfg.out_dir = a.out;
  if (given(app, "--storage")) cfg.storage = parse_storage_policy(a.storage);
  if (given(app, "--schedule")) cfg.schedule = parse_schedule(a.schedule);
  if (given(app, "--psd-project")) cfg.psd_project = a.psd_project;
  if (given(app, "--cache")) cfg.cache = a.cache;
  if (given(app, "--budget")) cfg.scalar_budget = a.budget;
  cfg.validate();
  return cfg;
}

ExperimentConfig defaults_for(gpcorr::harness::ExperimentKind kind) {
  using gpcorr::harness::ExperimentKind;
  switch (kind) {
    case ExperimentKind::one_d:
      return ExperimentConfig::one_d_defaults();
    case ExperimentKind::two_d:
      return ExperimentConfig::two_d_defaults();
    case ExperimentKind::custom:
      return gpcorr::harness::large_timing_config();
  }
  return ExperimentConfig::one_d_defaults();
}

int run_experiment_command(const ExperimentConfig& cfg) {
  const auto result = gpcorr::harness::run_experiment(cfg);
  const auto paths = gpcorr::harness::write_experiment_csv(result, cfg.out_dir);
  const auto& s = result.summary;
  fmt::print("{}: {} trials, corrected beats corrupted in {}\n", cfg.prefix(), s.trials, s.wins);
  fmt::print("  mean error norm  corrupted {:.6g}  corrected {:.6g}  retrained {:.6g}\n", s.mean_error_corrupted,
             s.mean_error_corrected, s.mean_error_ideal);
  fmt::print("  mean improvement {:.4g}% (sd {:.3g}%)\n", s.mean_improvement, s.stddev_improvement);
  if (s.undefined_improvements > 0) {
    fmt::print("  {} trials had a zero corrupted error; their improvement is reported as 0\n",
               s.undefined_improvements);
  }
  if (s.indefinite_trials > 0) {
    fmt::print("  {} trials produced an indefinite corrected covariance\n", s.indefinite_trials);
  }
  for (const auto& p : paths) fmt::print("  wrote {}\n", p.string());
  return kExitOk;
}

int run_timing_command(const CLI::App& app, const Args& a) {
  using namespace gpcorr::harness;
  std::vector<TimingRow> rows;
  std::string out_dir = given(app, "--out") ? a.out : "results";
  if (given(app, "--config") || given(app, "--kind")) {
    const auto kind = given(app, "--kind") ? parse_kind(a.kind) : ExperimentKind::one_d;
    ExperimentConfig cfg = build_config(app, a, defaults_for(kind));
    if (!given(app, "--trials")) cfg.trials = 15;
    std::optional<Eigen::Index> subset;
    if (given(app, "--subset")) subset = a.subset;
    rows.push_back(run_timing(cfg, subset));
  } else {
    ExperimentConfig one = build_config(app, a, ExperimentConfig::one_d_defaults());
    ExperimentConfig two = build_config(app, a, ExperimentConfig::two_d_defaults());
    ExperimentConfig big = build_config(app, a, large_timing_config());
    for (ExperimentConfig* c : {&one, &two, &big}) {
      if (!given(app, "--trials")) c->trials = 15;
    }
    rows.push_back(run_timing(one));
    rows.push_back(run_timing(two));
    rows.push_back(run_timing(big, given(app, "--subset") ? a.subset : 1));
  }
  fmt::print("{}", format_timing_table(rows));
  const std::filesystem::path path = std::filesystem::path(out_dir) / "timing.csv";
  write_timing_csv(rows, path);
  fmt::print("wrote {}\n", path.string());
  return kExitOk;
}

int run_check_command(const CLI::App& app, const Args& a) {
  gpcorr::harness::GradientCheckConfig cfg;
  if (given(app, "--seed")) cfg.seed = a.seed;
  if (given(app, "--instances")) cfg.instances = a.instances;
  if (given(app, "--kernel-pairs")) cfg.kernel_pairs = a.kernel_pairs;
  const auto report = gpcorr::harness::check_gradients(cfg);
  fmt::print("{}", gpcorr::harness::format_report(report));
  return report.pass() ? kExitOk : kExitCheckFailed;
}

int run_cache_command(const CLI::App& app, const Args& a) {
  using namespace gpcorr;
  if (!given(app, "--cache")) throw InputError("precompute-cache needs --cache <path>");
  const auto kind = given(app, "--kind") ? harness::parse_kind(a.kind) : harness::ExperimentKind::one_d;
  const ExperimentConfig cfg = build_config(app, a, defaults_for(kind));
  const harness::Instance inst = harness::make_instance(cfg, 0);
  const TrainedModel model = train(TrainingSet(inst.planned, inst.y), TestGrid(inst.test), cfg.hp);
  const CorrectionOperators ops = precompute(model, PrecomputeOptions{cfg.storage, cfg.scalar_budget, 0});
  save_operators(ops, *cfg.cache);
  fmt::print("wrote {} ({} storage, {} stored scalars, T={}, M={}, n={})\n", cfg.cache->string(),
             to_string(ops.policy()), ops.stored_scalars(), ops.num_train(), ops.num_test(), ops.dim());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process moment correction for training-location errors"};
  app.set_config("--config", "", "Key = value configuration file");
  app.require_subcommand(1);
  Args args;
  add_options(app, args);

  auto* exp1 = app.add_subcommand("experiment-1d", "1D field f1 with iid location noise");
  auto* exp2 = app.add_subcommand("experiment-2d", "2D field f2 with a constant location offset");
  auto* timing = app.add_subcommand("timing", "Retrain versus online correction timing table");
  auto* check = app.add_subcommand("check-gradients", "Compare analytic derivatives with finite differences");
  auto* cache = app.add_subcommand("precompute-cache", "Build operators and write them to --cache");
  for (auto* sub : {exp1, exp2, timing, check, cache}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  }

  try {
    using gpcorr::harness::ExperimentKind;
    if (exp1->parsed()) return run_experiment_command(build_config(app, args, ExperimentConfig::one_d_defaults()));
    if (exp2->parsed()) return run_experiment_command(build_config(app, args, ExperimentConfig::two_d_defaults()));
    if (timing->parsed()) return run_timing_command(app, args);
    if (check->parsed()) return run_check_command(app, args);
    if (cache->parsed()) return run_cache_command(app, args);
  } catch (const gpcorr::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInputError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}
