// Copyright 2026 recite-ctc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace recite {

/// Worker cap: RECITE_CTC_THREADS if set, hardware concurrency otherwise.
inline int worker_count() {
  if (const char* env = std::getenv("RECITE_CTC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs f(i) for i in [0, n). Items must be independent; results keyed by
/// index stay in input order. The first exception is rethrown on the caller.
template <typename F>
void parallel_for(std::int64_t n, F&& f) {
  const int workers = worker_count();
  if (workers <= 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  const int used = static_cast<int>(std::min<std::int64_t>(workers, n));
  for (int w = 0; w < used; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::int64_t i = w; i < n; i += used) f(i);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace recite
