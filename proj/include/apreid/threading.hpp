// Copyright (C) 2026 the apreid authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License"); you may not use this file except in compliance
// with the License. You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed under the License
// is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express
// or implied. See the License for the specific language governing permissions and limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace apreid {

// Contiguous-range fork/join. Workers write to disjoint slots only, so the
// result is identical for every thread count; any reduction across items is
// done by the caller in a fixed order.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t num_threads, Fn&& fn) {
  if (num_threads == 0) num_threads = std::max(1u, std::thread::hardware_concurrency());
  num_threads = std::min(num_threads, n);
  if (n == 0) return;
  if (num_threads <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(num_threads);
  std::exception_ptr err;
  std::size_t chunk = (n + num_threads - 1) / num_threads;
  for (std::size_t t = 0; t < num_threads; ++t) {
    std::size_t lo = t * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&fn, lo, hi, &err] {
      try {
        fn(lo, hi);
      } catch (...) {
        err = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace apreid
