#pragma once

#include <atomic>
#include <coroutine>
#include <cstdint>
#include <exception>
#include <utility>

#include "ces/errors.hpp"
#include "ces/trace.hpp"

// Task is a stackless coroutine driven by an Executor. The final-suspend
// hook is defined in executor.hpp; include <ces/ces.hpp> or executor.hpp.

namespace ces {

class Executor;
class Task;
class TaskHandle;
class Continuation;

enum class TaskState : std::uint8_t { created, running, suspended, completed };

namespace detail {

inline TaskId next_task_id() noexcept {
  static std::atomic<TaskId> next{1};
  return next.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

class TaskPromise {
 public:
  TaskPromise() noexcept : id_(detail::next_task_id()) {}

  Task get_return_object() noexcept;
  std::suspend_always initial_suspend() const noexcept { return {}; }

  struct FinalAwaiter {
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<TaskPromise> h) noexcept;
    void await_resume() const noexcept {}
  };
  FinalAwaiter final_suspend() const noexcept { return {}; }

  void return_void() const noexcept {}
  void unhandled_exception() noexcept {
    failed_ = true;
    error_ = std::current_exception();
  }

  TaskId id() const noexcept { return id_; }
  TaskState state() const noexcept { return state_.load(std::memory_order_acquire); }

  std::coroutine_handle<TaskPromise> handle() noexcept {
    return std::coroutine_handle<TaskPromise>::from_promise(*this);
  }

  // Created/Suspended -> Running. Exactly one caller wins per suspension.
  bool try_claim() noexcept {
    TaskState s = state_.load(std::memory_order_acquire);
    while (s == TaskState::created || s == TaskState::suspended) {
      if (state_.compare_exchange_weak(s, TaskState::running, std::memory_order_acq_rel,
                                       std::memory_order_acquire))
        return true;
    }
    return false;
  }

  // Suspended -> Running only.
  bool try_claim_suspended() noexcept {
    TaskState s = TaskState::suspended;
    return state_.compare_exchange_strong(s, TaskState::running, std::memory_order_acq_rel,
                                          std::memory_order_acquire);
  }

  // Must precede every publication of the continuation to another thread.
  void mark_suspended() noexcept { state_.store(TaskState::suspended, std::memory_order_release); }

  void retain() noexcept { refs_.fetch_add(1, std::memory_order_relaxed); }
  void release() noexcept {
    if (refs_.fetch_sub(1, std::memory_order_acq_rel) == 1) handle().destroy();
  }

 private:
  friend class Executor;
  friend class Task;
  friend class TaskHandle;

  TaskId id_;
  std::atomic<TaskState> state_{TaskState::created};
  std::atomic<std::uint32_t> refs_{1};
  std::atomic<bool> finished_{false};  // completed or dropped at shutdown
  bool failed_ = false;
  std::exception_ptr error_;
  Executor* executor_ = nullptr;
  std::uint64_t completed_ns_ = 0;
  TaskPromise* live_prev_ = nullptr;
  TaskPromise* live_next_ = nullptr;
};

/// Non-owning reference to a task's resume point. Valid while the task is
/// alive; state transitions on it are atomic so a continuation cannot be
/// resumed twice for the same suspension.
class Continuation {
 public:
  Continuation() noexcept = default;
  explicit Continuation(TaskPromise* p) noexcept : p_(p) {}

  TaskId id() const noexcept { return p_ ? p_->id() : kNoTask; }
  TaskState state() const noexcept { return p_->state(); }
  TaskPromise* promise() const noexcept { return p_; }

  explicit operator bool() const noexcept { return p_ != nullptr; }
  friend bool operator==(Continuation a, Continuation b) noexcept { return a.p_ == b.p_; }

 private:
  TaskPromise* p_ = nullptr;
};

/// Coroutine return type. Owns the frame until handed to Executor::spawn.
class Task {
 public:
  using promise_type = TaskPromise;

  Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
  Task& operator=(Task&& other) noexcept {
    if (this != &other) {
      reset();
      h_ = std::exchange(other.h_, {});
    }
    return *this;
  }
  Task(const Task&) = delete;
  Task& operator=(const Task&) = delete;
  ~Task() { reset(); }

  TaskId id() const noexcept { return h_ ? h_.promise().id() : kNoTask; }

 private:
  friend class TaskPromise;
  friend class Executor;

  explicit Task(std::coroutine_handle<TaskPromise> h) noexcept : h_(h) {}

  std::coroutine_handle<TaskPromise> release_handle() noexcept { return std::exchange(h_, {}); }
  void reset() noexcept {
    if (h_) std::exchange(h_, {}).promise().release();
  }

  std::coroutine_handle<TaskPromise> h_;
};

inline Task TaskPromise::get_return_object() noexcept { return Task{handle()}; }

/// Joinable reference to a spawned task. Keeps the frame's bookkeeping alive
/// so state queries stay valid after completion.
class TaskHandle {
 public:
  TaskHandle() noexcept = default;
  TaskHandle(const TaskHandle& o) noexcept : p_(o.p_) {
    if (p_) p_->retain();
  }
  TaskHandle(TaskHandle&& o) noexcept : p_(std::exchange(o.p_, nullptr)) {}
  TaskHandle& operator=(TaskHandle o) noexcept {
    std::swap(p_, o.p_);
    return *this;
  }
  ~TaskHandle() {
    if (p_) p_->release();
  }

  TaskId id() const noexcept { return p_->id(); }
  TaskState state() const noexcept { return p_->state(); }
  Continuation continuation() const noexcept { return Continuation{p_}; }
  bool finished() const noexcept { return p_->finished_.load(std::memory_order_acquire); }
  bool failed() const noexcept { return finished() && p_->failed_; }

  /// Blocks the calling OS thread until the task completes or is dropped at
  /// shutdown. Must not be called from inside a task.
  TaskState join() const {
    p_->finished_.wait(false, std::memory_order_acquire);
    return p_->state();
  }

  void rethrow_if_failed() const {
    if (failed() && p_->error_) std::rethrow_exception(p_->error_);
  }

 private:
  friend class Executor;
  explicit TaskHandle(TaskPromise* p) noexcept : p_(p) { p_->retain(); }

  TaskPromise* p_ = nullptr;
};

}  // namespace ces
