#pragma once

#include <coroutine>
#include <cstddef>
#include <cstdint>

#include "ces/clock.hpp"
#include "ces/detail/waiter_queue.hpp"
#include "ces/errors.hpp"
#include "ces/executor.hpp"
#include "ces/policy.hpp"
#include "ces/spinlock.hpp"

namespace ces {

/// Counting semaphore with FIFO admission. A release that satisfies w
/// waiters wakes them according to the policy; under CES one of them runs
/// on the releasing worker and the other w-1 go to the injector.
///
/// With unit acquires, permits > 0 implies no waiters. With larger
/// requests the head waiter may be blocked on a partial count.
template <UnlockPolicy Policy>
class BasicSemaphore {
 public:
  static constexpr UnlockPolicy policy = Policy;

  explicit BasicSemaphore(std::uint64_t initial = 0) noexcept
      : permits_(initial), id_(detail::next_primitive_id()) {}
  BasicSemaphore(const BasicSemaphore&) = delete;
  BasicSemaphore& operator=(const BasicSemaphore&) = delete;

  class [[nodiscard]] AcquireAwaiter {
   public:
    AcquireAwaiter(BasicSemaphore& s, std::uint32_t n) noexcept : s_(s) { node_.count = n; }

    bool await_ready() const noexcept { return false; }

    bool await_suspend(std::coroutine_handle<>) {
      TaskPromise* self = detail::running_task();
      BasicSemaphore& s = s_;
      s.guard_.lock();
      if (s.waiters_.empty() && s.permits_ >= node_.count) {
        s.permits_ -= node_.count;
        s.guard_.unlock();
        return false;
      }
      node_.task = self;
      node_.enq_ns = now_ns();
      s.waiters_.push_back(&node_);
      detail::record_sync(s.id_, SyncEventKind::enq, self->id(), kNoTask, node_.enq_ns);
      detail::suspend_current(self);
      s.guard_.unlock();
      return true;
    }

    void await_resume() const noexcept {
      detail::record_sync(s_.id_, SyncEventKind::enter, detail::tls_task->id());
    }

   private:
    BasicSemaphore& s_;
    detail::WaiterNode node_;
  };

  class [[nodiscard]] ReleaseAwaiter {
   public:
    ReleaseAwaiter(BasicSemaphore& s, std::uint32_t n) noexcept : s_(s), n_(n) {}

    bool await_ready() {
      TaskPromise* self = detail::running_task();
      detail::record_sync(s_.id_, SyncEventKind::exit, self->id());
      detail::Grant g;
      s_.guard_.lock();
      s_.permits_ += n_;
      detail::WaiterNode* head;
      while ((head = s_.waiters_.front()) != nullptr && s_.permits_ >= head->count) {
        s_.permits_ -= head->count;
        g.add(s_.waiters_.pop_front());
      }
      s_.guard_.unlock();
      if (!g) return true;
      if (!detail::wake_granted<Policy>(s_.id_, self, g)) return true;
      next_ = g.first;
      return false;
    }

    void await_suspend(std::coroutine_handle<>) const { detail::ces_switch(s_.id_, next_); }

    void await_resume() const noexcept {}

   private:
    BasicSemaphore& s_;
    std::uint32_t n_;
    TaskPromise* next_ = nullptr;
  };

  AcquireAwaiter acquire(std::uint32_t n = 1) {
    if (n == 0) throw usage_error("semaphore acquire of zero permits");
    return AcquireAwaiter{*this, n};
  }

  ReleaseAwaiter release(std::uint32_t n = 1) {
    if (n == 0) throw usage_error("semaphore release of zero permits");
    return ReleaseAwaiter{*this, n};
  }

  std::uint64_t permits() const noexcept {
    guard_.lock();
    auto p = permits_;
    guard_.unlock();
    return p;
  }

  std::size_t waiter_count() const noexcept {
    guard_.lock();
    auto n = waiters_.size();
    guard_.unlock();
    return n;
  }

  std::uint64_t id() const noexcept { return id_; }

 private:
  mutable Spinlock guard_;
  std::uint64_t permits_;
  detail::WaiterQueue waiters_;
  std::uint64_t id_;
};

using CesSemaphore = BasicSemaphore<UnlockPolicy::ces>;
using DispatchSemaphore = BasicSemaphore<UnlockPolicy::dispatch>;
using InlineSemaphore = BasicSemaphore<UnlockPolicy::inline_resume>;

}  // namespace ces
