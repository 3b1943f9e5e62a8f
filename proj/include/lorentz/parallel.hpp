#pragma once

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

namespace lorentz {

/// Runs fn(chunk) for chunk in [0, n_chunks) on up to `workers` threads.
/// Chunks are independent; callers store per-chunk results and reduce in chunk order.
template <class Fn>
void parallel_chunks(std::size_t n_chunks, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_chunks, 1))));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= n_chunks) return;
      try {
        fn(c);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n_chunks);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Pairwise (tree) summation; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.subspan(0, h)) + pairwise_sum(v.subspan(h));
}

/// Mean and standard error accumulated deterministically.
struct MeanSigma {
  double mean = 0.0;
  double sigma = 0.0;
  std::size_t count = 0;
};

inline MeanSigma mean_sigma(std::span<const double> v) {
  MeanSigma r;
  r.count = v.size();
  if (v.empty()) return r;
  r.mean = pairwise_sum(v) / static_cast<double>(v.size());
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - r.mean) * (v[i] - r.mean);
  const double var = v.size() > 1 ? pairwise_sum(sq) / static_cast<double>(v.size() - 1) : 0.0;
  r.sigma = std::sqrt(var / static_cast<double>(v.size()));
  return r;
}

}  // namespace lorentz
