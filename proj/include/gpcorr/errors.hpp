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

#ifndef GPCORR_ERRORS_HPP
#define GPCORR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gpcorr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatches, bad hyperparameters, bad files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Index outside 0..T-1 (or 0..M-1).
class IndexError : public InputError {
 public:
  using InputError::InputError;
};

/// The training Gram matrix could not be factorized.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Dense operator storage would exceed the configured scalar budget.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Operators and model (or perturbation set) describe different problems.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// No Taylor order up to the cap meets the requested accuracy.
class BoundUnsatisfiable : public Error {
 public:
  BoundUnsatisfiable(const std::string& what, double best_bound, int best_order)
      : Error(what), best_bound_(best_bound), best_order_(best_order) {}

  double best_bound() const noexcept { return best_bound_; }
  int best_order() const noexcept { return best_order_; }

 private:
  double best_bound_;
  int best_order_;
};

}  // namespace gpcorr

#endif  // GPCORR_ERRORS_HPP
