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

#ifndef GPCORR_TESTS_SUPPORT_ALLOC_TRACKER_HPP
#define GPCORR_TESTS_SUPPORT_ALLOC_TRACKER_HPP

#include <cstddef>

namespace gpcorr_test {

struct AllocStats {
  std::size_t count = 0;
  std::size_t total_bytes = 0;
  std::size_t largest_bytes = 0;
};

/// Records heap allocations made on the current thread while alive.
/// Scopes do not nest.
class AllocScope {
 public:
  AllocScope();
  ~AllocScope();
  AllocScope(const AllocScope&) = delete;
  AllocScope& operator=(const AllocScope&) = delete;

  AllocStats stats() const;
};

}  // namespace gpcorr_test

#endif  // GPCORR_TESTS_SUPPORT_ALLOC_TRACKER_HPP
