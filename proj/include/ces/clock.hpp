#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <vector>

namespace ces {

/// Monotonic nanoseconds since an arbitrary epoch. Comparable across threads.
inline std::uint64_t now_ns() noexcept {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(
          std::chrono::steady_clock::now().time_since_epoch())
          .count());
}

inline void cpu_relax() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_ia32_pause();
#elif defined(__aarch64__)
  asm volatile("yield" ::: "memory");
#endif
}

/// Median cost of two back-to-back clock reads. Subtracted from measured
/// intervals so that an empty section reads as ~0.
inline std::uint64_t clock_overhead_ns() {
  static const std::uint64_t overhead = [] {
    std::vector<std::uint64_t> d(1001);
    for (auto& x : d) {
      auto a = now_ns();
      auto b = now_ns();
      x = b - a;
    }
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2];
  }();
  return overhead;
}

namespace detail {

inline std::uint64_t spin_kernel(std::uint64_t iterations) noexcept {
  std::uint64_t x = 0x9e3779b97f4a7c15ull;
  for (std::uint64_t i = 0; i < iterations; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    asm volatile("" : "+r"(x));
  }
  return x;
}

}  // namespace detail

/// Busy-wait loop calibrated against the monotonic clock once per process.
/// The wait is an iteration count, so it burns CPU for the requested time
/// without touching the clock on the hot path.
class SpinCalibration {
 public:
  static const SpinCalibration& instance() {
    static const SpinCalibration cal;
    return cal;
  }

  double iterations_per_ns() const noexcept { return per_ns_; }

  void busy_wait(std::uint64_t ns) const noexcept {
    if (ns == 0) return;
    detail::spin_kernel(static_cast<std::uint64_t>(static_cast<double>(ns) * per_ns_));
  }

 private:
  SpinCalibration() {
    constexpr std::uint64_t kIters = 2'000'000;
    double best = 1e300;
    for (int round = 0; round < 7; ++round) {
      auto t0 = now_ns();
      detail::spin_kernel(kIters);
      auto t1 = now_ns();
      best = std::min(best, static_cast<double>(t1 - t0));
    }
    per_ns_ = static_cast<double>(kIters) / std::max(best, 1.0);
  }

  double per_ns_ = 1.0;
};

inline void busy_wait_ns(std::uint64_t ns) noexcept { SpinCalibration::instance().busy_wait(ns); }

}  // namespace ces
