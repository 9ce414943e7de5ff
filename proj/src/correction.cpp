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

#include "gpcorr/correction.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "gpcorr/errors.hpp"

namespace gpcorr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

PerturbationSet::PerturbationSet(Index num_train, Index dim, double delta_max)
    : num_train_(num_train), dim_(dim), delta_max_(delta_max) {
  if (num_train < 1 || dim < 1) throw InputError("perturbation set needs T >= 1 and n >= 1");
  if (!(delta_max >= 0.0) || !std::isfinite(delta_max)) {
    throw InputError(fmt::format("delta_max must be finite and non-negative, got {}", delta_max));
  }
}

PerturbationSet PerturbationSet::from_rows(const MatrixXd& deltas, double delta_max) {
  PerturbationSet p(deltas.rows(), deltas.cols(), delta_max);
  for (Index i = 0; i < deltas.rows(); ++i) p.set(i, deltas.row(i).transpose());
  return p;
}

void PerturbationSet::set(Index i, const VectorXd& delta) {
  check_index(i, num_train_, "perturbation");
  if (delta.size() != dim_) {
    throw InputError(fmt::format("perturbation {} has length {}, expected {}", i, delta.size(), dim_));
  }
  if (!delta.allFinite()) throw InputError(fmt::format("perturbation {} is not finite", i));
  const double norm = delta.norm();
  if (norm > delta_max_) {
    throw InputError(fmt::format("perturbation {} has norm {} above delta_max {}", i, norm, delta_max_));
  }
  entries_[i] = delta;
}

MatrixXd PerturbationSet::to_dense() const {
  MatrixXd out = MatrixXd::Zero(num_train_, dim_);
  for (const auto& [i, d] : entries_) out.row(i) = d.transpose();
  return out;
}

PerturbationSet PerturbationSet::scaled(double s) const {
  if (!(s >= 0.0) || !std::isfinite(s)) throw InputError("perturbation scale must be finite and non-negative");
  PerturbationSet p(num_train_, dim_, delta_max_ * s);
  for (const auto& [i, d] : entries_) p.entries_[i] = d * s;
  return p;
}

std::string_view to_string(Schedule s) { return s == Schedule::fused ? "fused" : "blockwise"; }

Schedule parse_schedule(std::string_view s) {
  if (s == "fused") return Schedule::fused;
  if (s == "blockwise") return Schedule::blockwise;
  throw InputError(fmt::format("unknown schedule '{}' (expected fused or blockwise)", s));
}

MatrixXd project_psd(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw ModelError("eigendecomposition of the corrected covariance failed");
  const VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
  MatrixXd out = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

namespace {

void check_inputs(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert, int order) {
  if (order != 1 && order != 2) throw InputError(fmt::format("correction order must be 1 or 2, got {}", order));
  ops.check_compatible(base);
  if (pert.num_train() != ops.num_train() || pert.dim() != ops.dim()) {
    throw ContractError(fmt::format("perturbation set is for T={}, n={} but the operators have T={}, n={}",
                                    pert.num_train(), pert.dim(), ops.num_train(), ops.dim()));
  }
}

VectorXd outer_vec(const VectorXd& a, const VectorXd& b) {
  // vec(a b^T), column-major: entry d + n f = a[d] b[f].
  const Index n = a.size();
  VectorXd v(n * n);
  for (Index f = 0; f < n; ++f) v.segment(f * n, n) = a * b[f];
  return v;
}

// Per-index contractions shared by both fused moments, one column per
// perturbed index k (training index idx[k], perturbation delta_k).
struct FusedContext {
  std::vector<Index> idx;
  std::vector<IndexView> views;
  MatrixXd D;      // n x K, columns delta_k
  MatrixXd X;      // M x K, Q delta
  MatrixXd U;      // T x K, U delta
  MatrixXd Kappa;  // T x K, W delta (order 2)
  MatrixXd A2;     // M x K, eT_hess (delta x delta) (order 2)
  MatrixXd W2;     // T x K, TT_hess (delta x delta) (order 2)
  MatrixXd PW2;    // M x K, P TT_hess (delta x delta) (order 2)
  MatrixXd Pk;     // M x K, columns of P at idx
  MatrixXd xi;     // K x K pair curvature (order 2)

  Index size() const { return static_cast<Index>(idx.size()); }
};

// Xi[k, l] = -2 delta_k^T d^2k(z_l, z_k)/dz dz^T delta_l for k != l.
void pair_curvature(FusedContext& ctx, Index n) {
  const Index K = ctx.size();
  ctx.xi.setZero(K, K);
  MatrixXd g;
  for (Index k = 0; k < K; ++k) {
    const MatrixXd& h = ctx.views[static_cast<std::size_t>(k)].TT_hess;
    // g(r, f) = sum_d h(r, d + n f) delta_k[d]
    g.resize(h.rows(), n);
    for (Index f = 0; f < n; ++f) g.col(f).noalias() = h.middleCols(f * n, n) * ctx.D.col(k);
    for (Index l = 0; l < K; ++l) {
      if (l != k) ctx.xi(k, l) = -2.0 * g.row(ctx.idx[static_cast<std::size_t>(l)]).dot(ctx.D.col(l));
    }
  }
}

FusedContext fused_context(const CorrectionOperators& ops, const PerturbationSet& pert, int order) {
  const Index M = ops.num_test();
  const Index T = ops.num_train();
  const Index n = ops.dim();
  const auto K = static_cast<Index>(pert.size());
  FusedContext ctx;
  ctx.idx.reserve(static_cast<std::size_t>(K));
  ctx.views.reserve(static_cast<std::size_t>(K));
  ctx.D.resize(n, K);
  ctx.X.resize(M, K);
  ctx.U.resize(T, K);
  ctx.Pk.resize(M, K);
  if (order == 2) {
    ctx.Kappa.resize(T, K);
    ctx.A2.resize(M, K);
    ctx.W2.resize(T, K);
    ctx.PW2.resize(M, K);
  }
  VectorXd dd(n * n);
  Index k = 0;
  for (const auto& [i, d] : pert.entries()) {
    ctx.idx.push_back(i);
    ctx.views.push_back(ops.view(i));
    const IndexView& v = ctx.views.back();
    ctx.D.col(k) = d;
    ctx.X.col(k).noalias() = v.factors.Q * d;
    ctx.U.col(k).noalias() = v.TT * d;
    ctx.Pk.col(k) = ops.P().col(i);
    if (order == 2) {
      for (Index f = 0; f < n; ++f) dd.segment(f * n, n) = d * d[f];
      ctx.Kappa.col(k).noalias() = v.factors.W * d;
      ctx.A2.col(k).noalias() = v.eT_hess * dd;
      ctx.W2.col(k).noalias() = v.TT_hess * dd;
      ctx.PW2.col(k).noalias() = v.factors.PHK * dd;
    }
    ++k;
  }
  if (order == 2) pair_curvature(ctx, n);
  return ctx;
}

void fused_mean(const CorrectionOperators& ops, const TrainedModel& base, const FusedContext& ctx, int order,
                VectorXd& first, VectorXd& second) {
  const VectorXd& c = base.c();
  const Index K = ctx.size();
  VectorXd c_k(K);
  for (Index k = 0; k < K; ++k) c_k[k] = c(ctx.idx[static_cast<std::size_t>(k)]);
  const VectorXd uc = ctx.U.transpose() * c;

  first.noalias() = ctx.X * c_k;
  first.noalias() -= ctx.Pk * uc;
  if (order < 2) {
    second = VectorXd::Zero(ops.num_test());
    return;
  }

  // s = d(K^{-1}) c along delta, without the minus sign.
  VectorXd s = ctx.Kappa * c_k;
  for (Index k = 0; k < K; ++k) s.noalias() += ctx.views[static_cast<std::size_t>(k)].factors.kinv_col * uc[k];
  VectorXd s_k(K);
  for (Index k = 0; k < K; ++k) s_k[k] = s(ctx.idx[static_cast<std::size_t>(k)]);
  const VectorXd w2c = ctx.W2.transpose() * c;
  const VectorXd us = ctx.U.transpose() * s;

  VectorXd m2 = (ctx.A2 - ctx.PW2) * c_k;
  m2.noalias() -= 2.0 * (ctx.X * s_k);
  const VectorXd pk_coef = 2.0 * us - w2c - ctx.xi * c_k;
  m2.noalias() += ctx.Pk * pk_coef;
  second = 0.5 * m2;
}

// Lower triangle of cov_hat plus the covariance increment. With
// Phi = [X | Pk] the increment is Z + Z^T, Z = Omega Phi^T, where
//   order 1: Z = -X Pk^T
//   order 2: Z = O1 X^T + (O2 - X) Pk^T, O1 = -X Kinv_kk / 2.
// O1 X^T is symmetric, so Z + Z^T = Y1 X^T + B Pk^T + Pk B^T with
// Y1 = -X Kinv_kk and B = O2 - X: one K + 2K wide triangular product.
// The upper triangle is mirrored, so the result is exactly symmetric.
MatrixXd fused_cov(const CorrectionOperators& ops, const TrainedModel& base, const FusedContext& ctx, int order,
                   CorrectionTerms* terms) {
  const Index M = ops.num_test();
  const Index K = ctx.size();
  const MatrixXd& X = ctx.X;
  const MatrixXd& Pk = ctx.Pk;

  // Reused across calls so repeated corrections do not page fresh heap memory in.
  thread_local MatrixXd left;
  thread_local MatrixXd right;
  if (order < 2) {
    left.resize(M, 2 * K);
    right.resize(M, 2 * K);
    left << -X, -Pk;
    right << Pk, X;
    if (terms) terms->cov_second = MatrixXd::Zero(M, M);
  } else {
    MatrixXd kinv_kk(K, K);
    MatrixXd kap(K, K);
    for (Index l = 0; l < K; ++l) {
      for (Index k = 0; k < K; ++k) {
        kinv_kk(k, l) = ops.kinv()(ctx.idx[static_cast<std::size_t>(k)], ctx.idx[static_cast<std::size_t>(l)]);
        kap(k, l) = ctx.Kappa(ctx.idx[static_cast<std::size_t>(k)], l);
      }
    }
    const MatrixXd uku = ctx.U.transpose() * ctx.Kappa;
    const MatrixXd mix = 0.5 * (uku - 0.5 * ctx.xi);
    left.resize(M, 3 * K);
    right.resize(M, 3 * K);
    auto y1 = left.leftCols(K);
    auto b = left.middleCols(K, K);
    y1.noalias() = -(X * kinv_kk);
    b.noalias() = X * kap;
    b -= 0.5 * (ctx.A2 - ctx.PW2);
    b.noalias() -= Pk * mix;
    if (terms) {
      MatrixXd z = 0.5 * (y1 * X.transpose());
      z.noalias() += b * Pk.transpose();
      terms->cov_second = z + z.transpose();
    }
    b -= X;
    left.rightCols(K) = Pk;
    right << X, Pk, b;
  }
  if (terms) {
    const MatrixXd f = -X * Pk.transpose();
    terms->cov_first = f + f.transpose();
  }

  MatrixXd cov = base.cov_hat();
  cov.triangularView<Eigen::Lower>() += left * right.transpose();
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
  return cov;
}

void blockwise_mean(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert, int order,
                    VectorXd& first, VectorXd& second) {
  const Index M = ops.num_test();
  const Index n = ops.dim();
  const VectorXd& y = base.training().measurements;
  MatrixXd scratch;
  VectorXd flat;

  first = VectorXd::Zero(M);
  for (const auto& [i, d] : pert.entries()) {
    flat.noalias() = ops.F(i, scratch) * y;
    first.noalias() += Eigen::Map<const MatrixXd>(flat.data(), M, n) * d;
  }
  second = VectorXd::Zero(M);
  if (order < 2) return;
  VectorXd acc = VectorXd::Zero(M);
  for (const auto& [i, di] : pert.entries()) {
    for (const auto& [j, dj] : pert.entries()) {
      flat.noalias() = ops.G(i, j, scratch) * y;
      acc.noalias() += Eigen::Map<const MatrixXd>(flat.data(), M, n * n) * outer_vec(di, dj);
    }
  }
  second = 0.5 * acc;
}

void blockwise_cov(const CorrectionOperators& ops, const PerturbationSet& pert, int order, MatrixXd& first,
                   MatrixXd& second) {
  const Index M = ops.num_test();
  const Index n = ops.dim();
  first = MatrixXd::Zero(M, M);
  CovJacobian jscratch;
  for (const auto& [i, d] : pert.entries()) {
    const CovJacobian& J = ops.cov_jacobian(i, jscratch);
    for (Index a = 0; a < n; ++a) first += d(a) * J[a];
  }
  second = MatrixXd::Zero(M, M);
  if (order < 2) return;
  CovHessian hscratch;
  MatrixXd acc = MatrixXd::Zero(M, M);
  for (const auto& [i, di] : pert.entries()) {
    for (const auto& [j, dj] : pert.entries()) {
      const CovHessian& H = ops.cov_hessian(i, j, hscratch);
      for (Index f = 0; f < n; ++f) {
        for (Index d = 0; d < n; ++d) acc += (di(d) * dj(f)) * H[d + n * f];
      }
    }
  }
  second = 0.5 * acc;
}

// Mean increments for a non-empty perturbation set, split by order.
struct MeanIncrements {
  VectorXd first;
  VectorXd second;
};

MeanIncrements compute_mean(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                            const FusedContext* ctx, int order, Schedule schedule) {
  MeanIncrements inc;
  if (schedule == Schedule::fused) {
    fused_mean(ops, base, *ctx, order, inc.first, inc.second);
  } else {
    blockwise_mean(ops, base, pert, order, inc.first, inc.second);
  }
  return inc;
}

VectorXd assemble_mean(const TrainedModel& base, const MeanIncrements& inc) {
  VectorXd mean = base.mean_hat() + inc.first;
  mean += inc.second;
  return mean;
}

// Corrected covariance for a non-empty perturbation set; exactly symmetric.
MatrixXd compute_cov(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                     const FusedContext* ctx, int order, Schedule schedule, CorrectionTerms* terms) {
  if (schedule == Schedule::fused) return fused_cov(ops, base, *ctx, order, terms);
  MatrixXd first;
  MatrixXd second;
  blockwise_cov(ops, pert, order, first, second);
  const MatrixXd half = 0.5 * (first + second);
  MatrixXd cov = base.cov_hat() + (half + half.transpose());
  if (terms) {
    terms->cov_first = std::move(first);
    terms->cov_second = std::move(second);
  }
  return cov;
}

std::optional<FusedContext> maybe_context(const CorrectionOperators& ops, const PerturbationSet& pert, int order,
                                          Schedule schedule) {
  if (schedule != Schedule::fused) return std::nullopt;
  return fused_context(ops, pert, order);
}

const FusedContext* ptr(const std::optional<FusedContext>& ctx) { return ctx ? &*ctx : nullptr; }

}  // namespace

VectorXd correct_mean(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert, int order,
                      Schedule schedule) {
  check_inputs(ops, base, pert, order);
  if (pert.empty()) return base.mean_hat();
  const auto ctx = maybe_context(ops, pert, order, schedule);
  return assemble_mean(base, compute_mean(ops, base, pert, ptr(ctx), order, schedule));
}

MatrixXd correct_cov(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert, int order,
                     Schedule schedule, bool psd_project) {
  check_inputs(ops, base, pert, order);
  MatrixXd cov;
  if (pert.empty()) {
    cov = base.cov_hat();
  } else {
    const auto ctx = maybe_context(ops, pert, order, schedule);
    cov = compute_cov(ops, base, pert, ptr(ctx), order, schedule, nullptr);
  }
  if (psd_project) cov = project_psd(cov);
  return cov;
}

CorrectedPosterior correct(const CorrectionOperators& ops, const TrainedModel& base, const PerturbationSet& pert,
                           const CorrectionOptions& opts) {
  check_inputs(ops, base, pert, opts.order);
  CorrectedPosterior out;
  out.order_used = opts.order;
  const Index M = ops.num_test();
  if (pert.empty()) {
    out.mean = base.mean_hat();
    out.cov = base.cov_hat();
    if (opts.keep_terms) {
      out.terms = CorrectionTerms{VectorXd::Zero(M), VectorXd::Zero(M), MatrixXd::Zero(M, M), MatrixXd::Zero(M, M)};
    }
  } else {
    const auto ctx = maybe_context(ops, pert, opts.order, opts.schedule);
    CorrectionTerms t;
    MeanIncrements inc = compute_mean(ops, base, pert, ptr(ctx), opts.order, opts.schedule);
    out.mean = assemble_mean(base, inc);
    out.cov = compute_cov(ops, base, pert, ptr(ctx), opts.order, opts.schedule, opts.keep_terms ? &t : nullptr);
    if (opts.keep_terms) {
      t.mean_first = std::move(inc.first);
      t.mean_second = std::move(inc.second);
      out.terms = std::move(t);
    }
  }
  if (opts.report_definiteness || opts.psd_project) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(out.cov, Eigen::EigenvaluesOnly);
    out.min_eigenvalue = eig.eigenvalues().minCoeff();
    out.max_abs_eigenvalue = eig.eigenvalues().cwiseAbs().maxCoeff();
  }
  if (opts.psd_project) {
    out.cov = project_psd(out.cov);
    out.psd_projected = true;
  }
  return out;
}

CorrectedPosterior run_algorithm_1(const TrainedModel& base, const PerturbationSet& pert, const Algorithm1Options& opts) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  std::optional<CorrectionOperators> ops;
  if (opts.cache && std::filesystem::exists(*opts.cache)) {
    ops.emplace(load_operators(*opts.cache, base));
  } else {
    ops.emplace(precompute(base, opts.precompute));
    if (opts.cache) save_operators(*ops, *opts.cache);
  }
  const auto t1 = clock::now();
  CorrectedPosterior out = correct(*ops, base, pert, opts.correction);
  const auto t2 = clock::now();
  out.offline_seconds = std::chrono::duration<double>(t1 - t0).count();
  out.online_seconds = std::chrono::duration<double>(t2 - t1).count();
  return out;
}

}  // namespace gpcorr
