#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace equitrace {

/// Number of workers to use for `requested` (0 means hardware concurrency).
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Calls f(i) for every i in [0, n). Work is handed out in index order; any
/// result must be written to slot i so the outcome does not depend on
/// scheduling. The exception from the smallest failing index is rethrown.
template <typename F>
void parallel_for(size_t n, int threads, F&& f) {
  const int workers = std::min<int>(resolve_threads(threads), static_cast<int>(std::max<size_t>(n, 1)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::mutex err_mu;
  size_t err_index = n;
  std::exception_ptr err;
  auto body = [&]() {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Pairwise sum of partial results in fixed index order.
inline double tree_sum(std::vector<double> parts) {
  if (parts.empty()) return 0.0;
  while (parts.size() > 1) {
    std::vector<double> next((parts.size() + 1) / 2);
    for (size_t i = 0; i < next.size(); ++i) {
      next[i] = parts[2 * i] + (2 * i + 1 < parts.size() ? parts[2 * i + 1] : 0.0);
    }
    parts.swap(next);
  }
  return parts[0];
}

/// Neumaier compensated accumulator.
class KahanSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace equitrace
