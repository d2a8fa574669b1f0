#pragma once

#include <coroutine>
#include <cstddef>
#include <cstdint>

#include "ces/clock.hpp"
#include "ces/detail/waiter_queue.hpp"
#include "ces/executor.hpp"
#include "ces/policy.hpp"
#include "ces/spinlock.hpp"

namespace ces {

/// Fair reader-writer mutex. Admission is FIFO; consecutive readers at the
/// head of the queue are admitted together. A reader never overtakes a
/// queued writer.
///
/// Invariant: a non-empty queue implies a writer is active or the head
/// waiter is a writer.
template <UnlockPolicy Policy>
class BasicRwMutex {
 public:
  static constexpr UnlockPolicy policy = Policy;

  BasicRwMutex() noexcept : id_(detail::next_primitive_id()) {}
  BasicRwMutex(const BasicRwMutex&) = delete;
  BasicRwMutex& operator=(const BasicRwMutex&) = delete;

  class [[nodiscard]] LockAwaiter {
   public:
    LockAwaiter(BasicRwMutex& rw, bool writer) noexcept : rw_(rw) { node_.writer = writer; }

    bool await_ready() const noexcept { return false; }

    bool await_suspend(std::coroutine_handle<>) {
      TaskPromise* self = detail::running_task();
      BasicRwMutex& rw = rw_;
      rw.guard_.lock();
      bool admit = node_.writer ? (!rw.writer_ && rw.readers_ == 0 && rw.waiters_.empty())
                                : (!rw.writer_ && rw.waiters_.empty());
      if (admit) {
        if (node_.writer) rw.writer_ = true;
        else ++rw.readers_;
        rw.guard_.unlock();
        return false;
      }
      node_.task = self;
      node_.enq_ns = now_ns();
      rw.waiters_.push_back(&node_);
      detail::record_sync(rw.id_, SyncEventKind::enq, self->id(), kNoTask, node_.enq_ns);
      detail::suspend_current(self);
      rw.guard_.unlock();
      return true;
    }

    void await_resume() const noexcept {
      detail::record_sync(rw_.id_, SyncEventKind::enter, detail::tls_task->id());
    }

   private:
    BasicRwMutex& rw_;
    detail::WaiterNode node_;
  };

  class [[nodiscard]] UnlockAwaiter {
   public:
    UnlockAwaiter(BasicRwMutex& rw, bool writer) noexcept : rw_(rw), writer_(writer) {}

    bool await_ready() {
      TaskPromise* self = detail::running_task();
      detail::record_sync(rw_.id_, SyncEventKind::exit, self->id());
      detail::Grant g;
      rw_.guard_.lock();
      if (writer_) {
        rw_.writer_ = false;
        rw_.admit_locked(g);
      } else {
        --rw_.readers_;
        // Other readers still active: the unlocking task simply continues.
        if (rw_.readers_ == 0) rw_.admit_locked(g);
      }
      rw_.guard_.unlock();
      if (!g) return true;
      if (!detail::wake_granted<Policy>(rw_.id_, self, g)) return true;
      next_ = g.first;
      return false;
    }

    void await_suspend(std::coroutine_handle<>) const { detail::ces_switch(rw_.id_, next_); }

    void await_resume() const noexcept {}

   private:
    BasicRwMutex& rw_;
    bool writer_;
    TaskPromise* next_ = nullptr;
  };

  LockAwaiter lock_read() noexcept { return LockAwaiter{*this, false}; }
  LockAwaiter lock_write() noexcept { return LockAwaiter{*this, true}; }
  UnlockAwaiter unlock_read() noexcept { return UnlockAwaiter{*this, false}; }
  UnlockAwaiter unlock_write() noexcept { return UnlockAwaiter{*this, true}; }

  std::uint32_t active_readers() const noexcept {
    guard_.lock();
    auto r = readers_;
    guard_.unlock();
    return r;
  }

  bool writer_active() const noexcept {
    guard_.lock();
    bool w = writer_;
    guard_.unlock();
    return w;
  }

  std::size_t waiter_count() const noexcept {
    guard_.lock();
    auto n = waiters_.size();
    guard_.unlock();
    return n;
  }

  std::uint64_t id() const noexcept { return id_; }

 private:
  // Grants the lock to the head of the queue if it is admissible now.
  void admit_locked(detail::Grant& g) noexcept {
    detail::WaiterNode* head = waiters_.front();
    if (head == nullptr || writer_) return;
    if (head->writer) {
      if (readers_ != 0) return;
      writer_ = true;
      g.add(waiters_.pop_front());
      return;
    }
    while ((head = waiters_.front()) != nullptr && !head->writer) {
      ++readers_;
      g.add(waiters_.pop_front());
    }
  }

  mutable Spinlock guard_;
  std::uint32_t readers_ = 0;
  bool writer_ = false;
  detail::WaiterQueue waiters_;
  std::uint64_t id_;
};

using CesRwMutex = BasicRwMutex<UnlockPolicy::ces>;
using DispatchRwMutex = BasicRwMutex<UnlockPolicy::dispatch>;
using InlineRwMutex = BasicRwMutex<UnlockPolicy::inline_resume>;

}  // namespace ces
