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

class ConditionVariable;

/// Task-aware mutex. The lock path is shared by all policies: a
/// spinlock-guarded two-state flag plus an intrusive FIFO of waiters.
/// Ownership passes directly to the head waiter; nobody can overtake it.
///
///   co_await m.lock();
///   ...critical section...
///   co_await m.unlock();
///
/// Non-reentrant. Debug builds (CES_DEBUG_OWNERSHIP) track the owner and
/// throw usage_error on reentrant lock or foreign unlock.
template <UnlockPolicy Policy>
class BasicMutex {
 public:
  static constexpr UnlockPolicy policy = Policy;

  BasicMutex() noexcept : id_(detail::next_primitive_id()) {}
  BasicMutex(const BasicMutex&) = delete;
  BasicMutex& operator=(const BasicMutex&) = delete;

  class [[nodiscard]] LockAwaiter {
   public:
    explicit LockAwaiter(BasicMutex& m) noexcept : m_(m) {}

    bool await_ready() const noexcept { return false; }

    bool await_suspend(std::coroutine_handle<>) {
      TaskPromise* self = detail::running_task();
      BasicMutex& m = m_;
      m.guard_.lock();
      if (!m.locked_) {
        m.locked_ = true;
        m.set_owner(self);
        m.guard_.unlock();
        return false;
      }
#if CES_DEBUG_OWNERSHIP
      if (m.owner_ == self->id()) {
        m.guard_.unlock();
        throw usage_error("reentrant lock of a task-aware mutex");
      }
#endif
      node_.task = self;
      node_.enq_ns = now_ns();
      m.waiters_.push_back(&node_);
      detail::record_sync(m.id_, SyncEventKind::enq, self->id(), kNoTask, node_.enq_ns);
      detail::suspend_current(self);
      m.guard_.unlock();
      return true;
    }

    void await_resume() const noexcept {
      detail::record_sync(m_.id_, SyncEventKind::enter, detail::tls_task->id());
    }

   private:
    BasicMutex& m_;
    detail::WaiterNode node_;
  };

  class [[nodiscard]] UnlockAwaiter {
   public:
    explicit UnlockAwaiter(BasicMutex& m) noexcept : m_(m) {}

    bool await_ready() {
      TaskPromise* self = detail::running_task();
      detail::record_sync(m_.id_, SyncEventKind::exit, self->id());
      detail::Grant g;
      {
        m_.guard_.lock();
#if CES_DEBUG_OWNERSHIP
        if (!m_.locked_ || m_.owner_ != self->id()) {
          m_.guard_.unlock();
          throw usage_error("unlock of a task-aware mutex not held by the caller");
        }
#endif
        if (detail::WaiterNode* n = m_.waiters_.pop_front()) {
          g.add(n);
          m_.set_owner(g.first);
        } else {
          m_.locked_ = false;
          m_.set_owner(nullptr);
        }
        m_.guard_.unlock();
      }
      if (!g) return true;
      if (!detail::wake_granted<Policy>(m_.id_, self, g)) return true;
      next_ = g.first;
      return false;
    }

    void await_suspend(std::coroutine_handle<>) const { detail::ces_switch(m_.id_, next_); }

    void await_resume() const noexcept {}

   private:
    BasicMutex& m_;
    TaskPromise* next_ = nullptr;
  };

  LockAwaiter lock() noexcept { return LockAwaiter{*this}; }
  UnlockAwaiter unlock() noexcept { return UnlockAwaiter{*this}; }

  /// Enters without suspending if the mutex is free. Call from a task.
  bool try_lock() {
    TaskPromise* self = detail::running_task();
    guard_.lock();
    if (locked_) {
      guard_.unlock();
      return false;
    }
    locked_ = true;
    set_owner(self);
    guard_.unlock();
    detail::record_sync(id_, SyncEventKind::enter, self->id());
    return true;
  }

  bool is_locked() const noexcept {
    guard_.lock();
    bool l = locked_;
    guard_.unlock();
    return l;
  }

  std::size_t waiter_count() const noexcept {
    guard_.lock();
    std::size_t n = waiters_.size();
    guard_.unlock();
    return n;
  }

  std::uint64_t id() const noexcept { return id_; }

 private:
  friend class ConditionVariable;

  void set_owner([[maybe_unused]] TaskPromise* p) noexcept {
#if CES_DEBUG_OWNERSHIP
    owner_ = p ? p->id() : kNoTask;
#endif
  }

  mutable Spinlock guard_;
  bool locked_ = false;
  detail::WaiterQueue waiters_;
  std::uint64_t id_;
#if CES_DEBUG_OWNERSHIP
  TaskId owner_ = kNoTask;
#endif
};

using CesMutex = BasicMutex<UnlockPolicy::ces>;
using DispatchMutex = BasicMutex<UnlockPolicy::dispatch>;
using InlineMutex = BasicMutex<UnlockPolicy::inline_resume>;

}  // namespace ces
