#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <mutex>
#include <vector>

namespace ces {

/// Unbounded multi-producer multi-consumer FIFO shared by all workers.
template <typename T>
class Injector {
 public:
  void push(T value) {
    std::lock_guard lock(mu_);
    items_.push_back(value);
    size_.store(items_.size(), std::memory_order_release);
  }

  T pop() {
    if (empty()) return T{};
    std::lock_guard lock(mu_);
    if (items_.empty()) return T{};
    T v = items_.front();
    items_.pop_front();
    size_.store(items_.size(), std::memory_order_release);
    return v;
  }

  /// Pops up to `max` items in FIFO order into `out`. Returns the count.
  std::size_t pop_batch(std::size_t max, std::vector<T>& out) {
    if (empty() || max == 0) return 0;
    std::lock_guard lock(mu_);
    std::size_t n = std::min(max, items_.size());
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(items_.front());
      items_.pop_front();
    }
    size_.store(items_.size(), std::memory_order_release);
    return n;
  }

  std::vector<T> drain() {
    std::lock_guard lock(mu_);
    std::vector<T> all(items_.begin(), items_.end());
    items_.clear();
    size_.store(0, std::memory_order_release);
    return all;
  }

  bool empty() const noexcept { return size() == 0; }
  std::size_t size() const noexcept { return size_.load(std::memory_order_acquire); }

 private:
  mutable std::mutex mu_;
  std::deque<T> items_;
  std::atomic<std::size_t> size_{0};
};

}  // namespace ces
