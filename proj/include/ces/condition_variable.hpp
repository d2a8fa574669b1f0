#pragma once

#include <coroutine>
#include <cstddef>
#include <cstdint>

#include "ces/clock.hpp"
#include "ces/detail/waiter_queue.hpp"
#include "ces/errors.hpp"
#include "ces/executor.hpp"
#include "ces/mutex.hpp"
#include "ces/spinlock.hpp"

namespace ces {

/// Condition variable bound to one CesMutex.
///
/// wait() parks the caller on the condition and releases the mutex with
/// CES semantics. notify moves waiters straight into the mutex queue when
/// the mutex is held, so a notified task is never resumed just to suspend
/// again. When the mutex is free the first notified task takes it and runs
/// on the notifier's worker; the notifier is dispatched.
///
/// Lock order: condition guard, then mutex guard.
class ConditionVariable {
 public:
  explicit ConditionVariable(CesMutex& m) noexcept : m_(m), id_(detail::next_primitive_id()) {}
  ConditionVariable(const ConditionVariable&) = delete;
  ConditionVariable& operator=(const ConditionVariable&) = delete;

  class [[nodiscard]] WaitAwaiter {
   public:
    explicit WaitAwaiter(ConditionVariable& cv) noexcept : cv_(cv) {}

    bool await_ready() const noexcept { return false; }

    void await_suspend(std::coroutine_handle<>) {
      TaskPromise* self = detail::running_task();
      ConditionVariable& cv = cv_;
      CesMutex& m = cv.m_;
      const TaskId self_id = self->id();
      const std::uint64_t mutex_id = m.id_;
#if CES_DEBUG_OWNERSHIP
      {
        m.guard_.lock();
        bool holds = m.locked_ && m.owner_ == self_id;
        m.guard_.unlock();
        if (!holds) throw usage_error("condition wait without holding the mutex");
      }
#endif
      detail::record_sync(mutex_id, SyncEventKind::exit, self_id);
      TaskPromise* next = nullptr;
      cv.guard_.lock();
      node_.task = self;
      node_.enq_ns = now_ns();
      detail::record_sync(cv.id_, SyncEventKind::enq, self_id, kNoTask, node_.enq_ns);
      detail::suspend_current(self);
      cv.waiters_.push_back(&node_);
      m.guard_.lock();
      if (detail::WaiterNode* n = m.waiters_.pop_front()) {
        next = n->task;
        m.set_owner(next);
      } else {
        m.locked_ = false;
        m.set_owner(nullptr);
      }
      m.guard_.unlock();
      cv.guard_.unlock();
      // From here on this frame may already be running elsewhere.
      if (next) {
        detail::record_sync(mutex_id, SyncEventKind::handoff, next->id(), self_id);
        detail::tls_worker->executor->resume_next_here(Continuation{next});
      }
    }

    void await_resume() const noexcept {
      detail::record_sync(cv_.m_.id_, SyncEventKind::enter, detail::tls_task->id());
    }

   private:
    ConditionVariable& cv_;
    detail::WaiterNode node_;
  };

  class [[nodiscard]] NotifyAwaiter {
   public:
    NotifyAwaiter(ConditionVariable& cv, bool all) noexcept : cv_(cv), all_(all) {}

    bool await_ready() {
      TaskPromise* self = detail::running_task();
      ConditionVariable& cv = cv_;
      CesMutex& m = cv.m_;

      detail::WaiterNode* chain = nullptr;
      detail::WaiterNode* chain_tail = nullptr;
      cv.guard_.lock();
      do {
        detail::WaiterNode* n = cv.waiters_.pop_front();
        if (!n) break;
        if (chain_tail) chain_tail->next = n;
        else chain = n;
        chain_tail = n;
      } while (all_);
      cv.guard_.unlock();
      if (!chain) return true;

      TaskPromise* first = nullptr;
      m.guard_.lock();
      for (detail::WaiterNode* n = chain; n != nullptr;) {
        detail::WaiterNode* following = n->next;
        detail::record_sync(m.id_, SyncEventKind::enq, n->task->id(), self->id());
        if (!m.locked_) {
          m.locked_ = true;
          m.set_owner(n->task);
          first = n->task;
        } else {
          // The waiter's own node moves to the mutex queue unchanged.
          n->enq_ns = now_ns();
          m.waiters_.push_back(n);
        }
        n = following;
      }
      m.guard_.unlock();
      if (!first) return true;
      next_ = first;
      return false;
    }

    void await_suspend(std::coroutine_handle<>) const { detail::ces_switch(cv_.m_.id_, next_); }

    void await_resume() const noexcept {}

   private:
    ConditionVariable& cv_;
    bool all_;
    TaskPromise* next_ = nullptr;
  };

  WaitAwaiter wait() noexcept { return WaitAwaiter{*this}; }
  NotifyAwaiter notify_one() noexcept { return NotifyAwaiter{*this, false}; }
  NotifyAwaiter notify_all() noexcept { return NotifyAwaiter{*this, true}; }

  std::size_t waiter_count() const noexcept {
    guard_.lock();
    auto n = waiters_.size();
    guard_.unlock();
    return n;
  }

  CesMutex& mutex() noexcept { return m_; }
  std::uint64_t id() const noexcept { return id_; }

 private:
  CesMutex& m_;
  mutable Spinlock guard_;
  detail::WaiterQueue waiters_;
  std::uint64_t id_;
};

}  // namespace ces
