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

// Operator cache file, all integers and doubles little-endian:
//
//   char[4] magic "GPRC"
//   u32     version (1)
//   u64     T, M, n
//   u32     storage policy (1 dense, 2 lazy)
//   u32     1 if covariance Hessians follow, else 0
//   u64     location fingerprint
//   f64[]   F^i for i ascending, then G^{i,j} for (i + T j) ascending,
//           then J_S^i, then H_S^{i,j}; each matrix column-major
//
// A lazy cache ends after the header.

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

#include "gpcorr/errors.hpp"
#include "gpcorr/operators.hpp"

namespace gpcorr {

namespace {

constexpr std::array<char, 4> kMagic = {'G', 'P', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out = 0;
    for (std::size_t b = 0; b < sizeof(U); ++b) {
      out = static_cast<U>((out << 8) | ((v >> (8 * b)) & 0xFF));
    }
    return out;
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw InputError(fmt::format("cannot open '{}' for writing", path.string()));
  }

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw InputError(fmt::format("write to '{}' failed", path_.string()));
  }
  void u32(std::uint32_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void u64(std::uint64_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void matrix(const Eigen::MatrixXd& m) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    } else {
      for (Eigen::Index k = 0; k < m.size(); ++k) u64(std::bit_cast<std::uint64_t>(m.data()[k]));
    }
  }
  void close() {
    out_.close();
    if (!out_) throw InputError(fmt::format("closing '{}' failed", path_.string()));
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw InputError(fmt::format("cannot open operator cache '{}'", path.string()));
  }

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      throw InputError(fmt::format("operator cache '{}' is truncated", path_.string()));
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return to_little(v);
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, sizeof v);
    return to_little(v);
  }
  void matrix(Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
    m.resize(rows, cols);
    if constexpr (std::endian::native == std::endian::little) {
      bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    } else {
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = std::bit_cast<double>(u64());
    }
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw InputError(fmt::format("operator cache '{}' has trailing bytes", path_.string()));
    }
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_operators(const CorrectionOperators& ops, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kVersion);
  w.u64(static_cast<std::uint64_t>(ops.T_));
  w.u64(static_cast<std::uint64_t>(ops.M_));
  w.u64(static_cast<std::uint64_t>(ops.n_));
  w.u32(ops.policy_ == StoragePolicy::dense ? 1u : 2u);
  w.u32(ops.hcov_dense_ ? 1u : 0u);
  w.u64(ops.fingerprint_);
  for (const auto& m : ops.F_) w.matrix(m);
  for (const auto& m : ops.G_) w.matrix(m);
  for (const auto& v : ops.Jcov_) {
    for (const auto& m : v) w.matrix(m);
  }
  for (const auto& v : ops.Hcov_) {
    for (const auto& m : v) w.matrix(m);
  }
  w.close();
}

CorrectionOperators load_operators(const std::filesystem::path& path, const TrainedModel& model) {
  Reader r(path);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw InputError(fmt::format("'{}' is not an operator cache file", path.string()));
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw InputError(fmt::format("operator cache '{}' has unsupported version {}", path.string(), version));
  }
  const auto T = static_cast<Eigen::Index>(r.u64());
  const auto M = static_cast<Eigen::Index>(r.u64());
  const auto n = static_cast<Eigen::Index>(r.u64());
  const std::uint32_t policy = r.u32();
  const std::uint32_t hcov = r.u32();
  const std::uint64_t fingerprint = r.u64();
  if (policy != 1 && policy != 2) {
    throw InputError(fmt::format("operator cache '{}' has unknown storage policy {}", path.string(), policy));
  }
  if (hcov > 1 || (policy == 2 && hcov == 1)) {
    throw InputError(fmt::format("operator cache '{}' has an inconsistent header", path.string()));
  }
  if (T != model.num_train() || M != model.num_test() || n != model.dim()) {
    throw ContractError(fmt::format("operator cache '{}' is for T={}, M={}, n={} but the model has T={}, M={}, n={}",
                                    path.string(), T, M, n, model.num_train(), model.num_test(), model.dim()));
  }
  if (fingerprint != model.location_fingerprint()) {
    throw ContractError(fmt::format(
        "operator cache '{}' was written for different locations or hyperparameters than the model", path.string()));
  }

  CorrectionOperators ops = CorrectionOperators::build_base(model, 0);
  ops.policy_ = (policy == 1) ? StoragePolicy::dense : StoragePolicy::lazy;
  ops.hcov_dense_ = (hcov == 1);
  if (ops.policy_ == StoragePolicy::dense) {
    ops.F_.resize(static_cast<std::size_t>(T));
    for (auto& m : ops.F_) r.matrix(m, M * n, T);
    ops.G_.resize(static_cast<std::size_t>(T * T));
    for (auto& m : ops.G_) r.matrix(m, M * n * n, T);
    ops.Jcov_.assign(static_cast<std::size_t>(T), CovJacobian(static_cast<std::size_t>(n)));
    for (auto& v : ops.Jcov_) {
      for (auto& m : v) r.matrix(m, M, M);
    }
    if (ops.hcov_dense_) {
      ops.Hcov_.assign(static_cast<std::size_t>(T * T), CovHessian(static_cast<std::size_t>(n * n)));
      for (auto& v : ops.Hcov_) {
        for (auto& m : v) r.matrix(m, M, M);
      }
    }
  }
  r.expect_end();
  return ops;
}

}  // namespace gpcorr
