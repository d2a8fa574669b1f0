#pragma once

#include <atomic>
#include <cstdint>
#include <thread>

#include "ces/clock.hpp"

namespace ces {

/// Test-and-set spinlock with bounded exponential backoff. Never parks the
/// OS thread; after the backoff saturates it offers the core to the OS
/// scheduler so a preempted holder can make progress.
class Spinlock {
 public:
  void lock() noexcept {
    std::uint32_t backoff = 1;
    std::uint32_t saturated_rounds = 0;
    while (flag_.exchange(true, std::memory_order_acquire)) {
      do {
        for (std::uint32_t i = 0; i < backoff; ++i) cpu_relax();
        if (backoff < kMaxBackoff) {
          backoff <<= 1;
        } else if (++saturated_rounds >= kRoundsBeforeYield) {
          saturated_rounds = 0;
          std::this_thread::yield();
        }
      } while (flag_.load(std::memory_order_relaxed));
    }
  }

  bool try_lock() noexcept {
    return !flag_.load(std::memory_order_relaxed) &&
           !flag_.exchange(true, std::memory_order_acquire);
  }

  void unlock() noexcept { flag_.store(false, std::memory_order_release); }

 private:
  static constexpr std::uint32_t kMaxBackoff = 1024;
  static constexpr std::uint32_t kRoundsBeforeYield = 8;

  std::atomic<bool> flag_{false};
};

}  // namespace ces
