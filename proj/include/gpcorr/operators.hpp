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

#ifndef GPCORR_OPERATORS_HPP
#define GPCORR_OPERATORS_HPP

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string_view>
#include <vector>

#include "gpcorr/derivatives.hpp"

namespace gpcorr {

enum class StoragePolicy {
  automatic,  ///< dense when it fits in the budget, lazy otherwise
  dense,
  lazy,
};

std::string_view to_string(StoragePolicy p);
StoragePolicy parse_storage_policy(std::string_view s);

inline constexpr std::size_t kDefaultScalarBudget = 10'000'000;

/// Covariance Hessian blocks are only ever stored for test grids up to this size.
inline constexpr Eigen::Index kMaxDenseCovHessianTests = 50;

/// Scalars held by a dense build: every F, G and J_cov block, plus the H_cov
/// blocks when M <= kMaxDenseCovHessianTests.
std::size_t dense_footprint(Eigen::Index T, Eigen::Index M, Eigen::Index n);

/// Resolves `automatic` against the budget. Throws BudgetError when `dense`
/// is requested but does not fit.
StoragePolicy resolve_policy(StoragePolicy requested, Eigen::Index T, Eigen::Index M, Eigen::Index n,
                             std::size_t budget);

struct PrecomputeOptions {
  StoragePolicy policy = StoragePolicy::automatic;
  std::size_t scalar_budget = kDefaultScalarBudget;
  /// 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
};

/// Offline products for one trained model.
///
/// Holds the kernel slices, K^{-1} and the per-index factors needed by every
/// correction schedule. Under the dense policy it also stores F^i, G^{i,j},
/// J_S^i and (for small M) H_S^{i,j}; under lazy they are rebuilt on request.
/// Nothing here depends on the measurements Y. Immutable after construction
/// apart from the opt-in access counters.
class CorrectionOperators {
 public:
  CorrectionOperators(CorrectionOperators&&) noexcept = default;
  CorrectionOperators& operator=(CorrectionOperators&&) noexcept = default;

  Eigen::Index num_train() const { return T_; }
  Eigen::Index num_test() const { return M_; }
  Eigen::Index dim() const { return n_; }
  StoragePolicy policy() const { return policy_; }
  bool cov_hessian_stored() const { return hcov_dense_; }
  std::uint64_t location_fingerprint() const { return fingerprint_; }

  /// Throws ContractError if `model` describes a different problem.
  void check_compatible(const TrainedModel& model) const;

  const KernelGradSlices& slices() const { return slices_; }
  const Eigen::MatrixXd& P() const { return P_; }
  const Eigen::MatrixXd& kinv() const { return kinv_; }

  // Per-index accessors. Each one records `i` (and `j`) when tracking is on.
  const IndexFactors& factors(Eigen::Index i) const;
  IndexView view(Eigen::Index i) const;

  /// F^i, (M n) x T. Returns the stored block, or builds it into `scratch`.
  const Eigen::MatrixXd& F(Eigen::Index i, Eigen::MatrixXd& scratch) const;
  /// G^{i,j}, (M n^2) x T.
  const Eigen::MatrixXd& G(Eigen::Index i, Eigen::Index j, Eigen::MatrixXd& scratch) const;
  const CovJacobian& cov_jacobian(Eigen::Index i, CovJacobian& scratch) const;
  const CovHessian& cov_hessian(Eigen::Index i, Eigen::Index j, CovHessian& scratch) const;

  /// Scalars currently held in dense tensors.
  std::size_t stored_scalars() const;

  // Access tracking, used by tests to show which indices a correction read.
  void enable_access_tracking(bool on) const;
  void reset_access_counts() const;
  std::vector<std::uint64_t> access_counts() const;

 private:
  friend CorrectionOperators precompute(const TrainedModel&, const PrecomputeOptions&);
  friend CorrectionOperators load_operators(const std::filesystem::path&, const TrainedModel&);
  friend void save_operators(const CorrectionOperators&, const std::filesystem::path&);

  CorrectionOperators() = default;
  // Slices, K^{-1} and per-index factors; no dense tensors.
  static CorrectionOperators build_base(const TrainedModel& model, unsigned threads);
  IndexView view_untracked(Eigen::Index i) const;
  void touch(Eigen::Index i) const;

  Eigen::Index T_ = 0;
  Eigen::Index M_ = 0;
  Eigen::Index n_ = 0;
  StoragePolicy policy_ = StoragePolicy::lazy;
  bool hcov_dense_ = false;
  std::uint64_t fingerprint_ = 0;

  KernelGradSlices slices_;
  Eigen::MatrixXd P_;
  Eigen::MatrixXd kinv_;
  std::vector<IndexFactors> factors_;

  std::vector<Eigen::MatrixXd> F_;
  std::vector<Eigen::MatrixXd> G_;
  std::vector<CovJacobian> Jcov_;
  std::vector<CovHessian> Hcov_;

  std::unique_ptr<std::atomic<bool>> tracking_ = std::make_unique<std::atomic<bool>>(false);
  std::unique_ptr<std::atomic<std::uint64_t>[]> counts_;
};

/// Offline phase. Deterministic: the thread count does not change any result.
CorrectionOperators precompute(const TrainedModel& model, const PrecomputeOptions& opts = {});

/// Writes the dense tensors (if any) to a little-endian binary file.
void save_operators(const CorrectionOperators& ops, const std::filesystem::path& path);

/// Rebuilds the cheap per-index factors from `model` and reads the dense
/// tensors back. Throws InputError on a malformed file and ContractError when
/// the file was written for different locations or hyperparameters.
CorrectionOperators load_operators(const std::filesystem::path& path, const TrainedModel& model);

/// Runs body(i) for i in [0, count) on up to `threads` threads.
template <class Body>
void parallel_for(Eigen::Index count, unsigned threads, Body&& body);

}  // namespace gpcorr

#include "gpcorr/detail/parallel.hpp"

#endif  // GPCORR_OPERATORS_HPP
