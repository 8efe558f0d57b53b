#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace hypexp {

/// Worker count from HYPEXP_THREADS, else hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("HYPEXP_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Evaluates f(0..n-1) on a pool and returns results ordered by index.
/// The first exception by task index is rethrown after all workers join.
template <class F>
auto parallel_map(std::size_t n, F&& f, int workers = worker_count()) {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errs(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        out[i] = f(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const std::size_t w = std::min<std::size_t>(std::max(1, workers), n);
  if (w <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::size_t k = 0; k < w; ++k) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace hypexp
