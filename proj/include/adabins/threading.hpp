#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

#include "adabins/common.hpp"

namespace adabins {

// Worker-thread cap. ADABINS_THREADS=0 (or unset) means auto.
inline int thread_budget() {
  static const int budget = [] {
    int cap = 0;
    if (const char* env = std::getenv("ADABINS_THREADS")) cap = std::atoi(env);
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (cap <= 0) return std::min(hw, 8);
    return std::min(cap, hw);
  }();
  return budget;
}

// Runs body(i) for i in [0, n). Work is split into contiguous chunks so each
// thread writes a disjoint index range; results are bitwise identical for any
// thread count as long as body(i) touches only state owned by index i.
inline void parallel_for(index_t n, const std::function<void(index_t)>& body) {
  if (n <= 0) return;
  int workers = std::min<index_t>(thread_budget(), n);
  if (workers <= 1 || n < 2) {
    for (index_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  index_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    index_t lo = w * chunk;
    index_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (index_t i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace adabins
