#pragma once

#include <cstddef>
#include <cstdint>

#include "ces/task.hpp"

namespace ces::detail {

/// Queue node embedded in a suspended task's awaiter, i.e. inside the
/// coroutine frame. Enqueueing allocates nothing.
struct WaiterNode {
  WaiterNode* next = nullptr;
  TaskPromise* task = nullptr;
  std::uint64_t enq_ns = 0;
  std::uint32_t count = 1;  // semaphore permits requested
  bool writer = false;      // rw-mutex tag
};

/// Intrusive singly linked FIFO. Not thread-safe; guarded by its owner.
class WaiterQueue {
 public:
  bool empty() const noexcept { return head_ == nullptr; }
  std::size_t size() const noexcept { return size_; }
  WaiterNode* front() const noexcept { return head_; }

  void push_back(WaiterNode* n) noexcept {
    n->next = nullptr;
    if (tail_) tail_->next = n;
    else head_ = n;
    tail_ = n;
    ++size_;
  }

  WaiterNode* pop_front() noexcept {
    WaiterNode* n = head_;
    if (!n) return nullptr;
    head_ = n->next;
    if (!head_) tail_ = nullptr;
    n->next = nullptr;
    --size_;
    return n;
  }

 private:
  WaiterNode* head_ = nullptr;
  WaiterNode* tail_ = nullptr;
  std::size_t size_ = 0;
};

}  // namespace ces::detail
