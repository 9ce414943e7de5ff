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

#include "gpcorr/operators.hpp"

#include <limits>
#include <string>

#include <fmt/format.h>

#include "gpcorr/errors.hpp"

namespace gpcorr {

using Eigen::Index;
using Eigen::MatrixXd;

std::string_view to_string(StoragePolicy p) {
  switch (p) {
    case StoragePolicy::automatic:
      return "auto";
    case StoragePolicy::dense:
      return "dense";
    case StoragePolicy::lazy:
      return "lazy";
  }
  return "?";
}

StoragePolicy parse_storage_policy(std::string_view s) {
  if (s == "auto" || s == "automatic") return StoragePolicy::automatic;
  if (s == "dense") return StoragePolicy::dense;
  if (s == "lazy") return StoragePolicy::lazy;
  throw InputError(fmt::format("unknown storage policy '{}' (expected dense, lazy or auto)", s));
}

std::size_t dense_footprint(Index T, Index M, Index n) {
  const double t = static_cast<double>(T);
  const double m = static_cast<double>(M);
  const double d = static_cast<double>(n);
  double total = t * (m * d * t) + t * t * (m * d * d * t) + t * (m * m * d);
  if (M <= kMaxDenseCovHessianTests) total += t * t * m * m * d * d;
  if (total >= static_cast<double>(std::numeric_limits<std::size_t>::max())) {
    return std::numeric_limits<std::size_t>::max();
  }
  return static_cast<std::size_t>(total);
}

StoragePolicy resolve_policy(StoragePolicy requested, Index T, Index M, Index n, std::size_t budget) {
  const std::size_t need = dense_footprint(T, M, n);
  switch (requested) {
    case StoragePolicy::lazy:
      return StoragePolicy::lazy;
    case StoragePolicy::automatic:
      return need <= budget ? StoragePolicy::dense : StoragePolicy::lazy;
    case StoragePolicy::dense:
      if (need > budget) {
        throw BudgetError(fmt::format(
            "dense operator storage needs {} scalars for T={}, M={}, n={} but the budget is {}; "
            "use the lazy storage policy or raise the budget",
            need, T, M, n, budget));
      }
      return StoragePolicy::dense;
  }
  return StoragePolicy::lazy;
}

void CorrectionOperators::check_compatible(const TrainedModel& model) const {
  if (model.num_train() != T_ || model.num_test() != M_ || model.dim() != n_) {
    throw ContractError(fmt::format("operators were built for T={}, M={}, n={} but the model has T={}, M={}, n={}", T_,
                                    M_, n_, model.num_train(), model.num_test(), model.dim()));
  }
  if (model.location_fingerprint() != fingerprint_) {
    throw ContractError("operators were built for different locations or hyperparameters than the model");
  }
}

void CorrectionOperators::touch(Index i) const {
  if (counts_ && tracking_ && tracking_->load(std::memory_order_relaxed)) {
    counts_[static_cast<std::size_t>(i)].fetch_add(1, std::memory_order_relaxed);
  }
}

void CorrectionOperators::enable_access_tracking(bool on) const { tracking_->store(on); }

void CorrectionOperators::reset_access_counts() const {
  for (Index i = 0; i < T_; ++i) counts_[static_cast<std::size_t>(i)].store(0);
}

std::vector<std::uint64_t> CorrectionOperators::access_counts() const {
  std::vector<std::uint64_t> out(static_cast<std::size_t>(T_));
  for (Index i = 0; i < T_; ++i) out[static_cast<std::size_t>(i)] = counts_[static_cast<std::size_t>(i)].load();
  return out;
}

IndexView CorrectionOperators::view_untracked(Index i) const {
  return IndexView{i, slices_.eT_hess[i], slices_.TT[i], slices_.TT_hess[i], factors_[i]};
}

const IndexFactors& CorrectionOperators::factors(Index i) const {
  check_index(i, T_, "training");
  touch(i);
  return factors_[i];
}

IndexView CorrectionOperators::view(Index i) const {
  check_index(i, T_, "training");
  touch(i);
  return view_untracked(i);
}

const MatrixXd& CorrectionOperators::F(Index i, MatrixXd& scratch) const {
  const IndexView v = view(i);
  if (policy_ == StoragePolicy::dense) return F_[i];
  scratch = mean_jacobian_generic(P_, v, kinv_);
  return scratch;
}

const MatrixXd& CorrectionOperators::G(Index i, Index j, MatrixXd& scratch) const {
  const IndexView vi = view(i);
  const IndexView vj = view(j);
  if (policy_ == StoragePolicy::dense) return G_[i + T_ * j];
  scratch = mean_hessian_generic(P_, vi, vj, kinv_);
  return scratch;
}

const CovJacobian& CorrectionOperators::cov_jacobian(Index i, CovJacobian& scratch) const {
  const IndexView v = view(i);
  if (policy_ == StoragePolicy::dense) return Jcov_[i];
  scratch = cov_jacobian_generic(P_, v);
  return scratch;
}

const CovHessian& CorrectionOperators::cov_hessian(Index i, Index j, CovHessian& scratch) const {
  const IndexView vi = view(i);
  const IndexView vj = view(j);
  if (hcov_dense_) return Hcov_[i + T_ * j];
  scratch = cov_hessian_generic(P_, vi, vj);
  return scratch;
}

std::size_t CorrectionOperators::stored_scalars() const {
  std::size_t total = 0;
  for (const auto& m : F_) total += static_cast<std::size_t>(m.size());
  for (const auto& m : G_) total += static_cast<std::size_t>(m.size());
  for (const auto& v : Jcov_) {
    for (const auto& m : v) total += static_cast<std::size_t>(m.size());
  }
  for (const auto& v : Hcov_) {
    for (const auto& m : v) total += static_cast<std::size_t>(m.size());
  }
  return total;
}

CorrectionOperators CorrectionOperators::build_base(const TrainedModel& model, unsigned threads) {
  CorrectionOperators ops;
  ops.T_ = model.num_train();
  ops.M_ = model.num_test();
  ops.n_ = model.dim();
  ops.fingerprint_ = model.location_fingerprint();
  ops.slices_ = build_kernel_grad_slices(model);
  ops.P_ = model.P();
  ops.kinv_ = model.factor().solve(MatrixXd::Identity(ops.T_, ops.T_));
  ops.factors_.resize(static_cast<std::size_t>(ops.T_));
  parallel_for(ops.T_, threads, [&](Index i) {
    IndexFactors f = index_factors(model, ops.slices_, i);
    f.kinv_col = ops.kinv_.col(i);
    ops.factors_[static_cast<std::size_t>(i)] = std::move(f);
  });
  ops.counts_ = std::make_unique<std::atomic<std::uint64_t>[]>(static_cast<std::size_t>(ops.T_));
  return ops;
}

CorrectionOperators precompute(const TrainedModel& model, const PrecomputeOptions& opts) {
  const Index T = model.num_train();
  const Index M = model.num_test();
  const Index n = model.dim();
  const StoragePolicy policy = resolve_policy(opts.policy, T, M, n, opts.scalar_budget);

  CorrectionOperators ops = CorrectionOperators::build_base(model, opts.threads);
  ops.policy_ = policy;
  if (policy != StoragePolicy::dense) return ops;

  ops.hcov_dense_ = (M <= kMaxDenseCovHessianTests);
  ops.F_.resize(static_cast<std::size_t>(T));
  ops.Jcov_.resize(static_cast<std::size_t>(T));
  parallel_for(T, opts.threads, [&](Index i) {
    const IndexView v = ops.view_untracked(i);
    ops.F_[i] = mean_jacobian_generic(ops.P_, v, ops.kinv_);
    ops.Jcov_[i] = cov_jacobian_generic(ops.P_, v);
  });
  ops.G_.resize(static_cast<std::size_t>(T * T));
  if (ops.hcov_dense_) ops.Hcov_.resize(static_cast<std::size_t>(T * T));
  parallel_for(T * T, opts.threads, [&](Index k) {
    const IndexView vi = ops.view_untracked(k % T);
    const IndexView vj = ops.view_untracked(k / T);
    ops.G_[k] = mean_hessian_generic(ops.P_, vi, vj, ops.kinv_);
    if (ops.hcov_dense_) ops.Hcov_[k] = cov_hessian_generic(ops.P_, vi, vj);
  });
  return ops;
}

}  // namespace gpcorr
