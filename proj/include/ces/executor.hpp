#pragma once

#include <pthread.h>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <system_error>
#include <thread>
#include <vector>

#include "ces/clock.hpp"
#include "ces/errors.hpp"
#include "ces/injector.hpp"
#include "ces/task.hpp"
#include "ces/trace.hpp"
#include "ces/work_deque.hpp"

namespace ces {

struct ExecutorConfig {
  std::size_t threads = 1;
  std::uint64_t seed = 0x5eed;
  /// Record task and sync events. Only effective when CES_ENABLE_TRACE is set.
  bool trace = false;
  /// Native stack per worker. Inline resumption nests activations, so deep
  /// convoys need room.
  std::size_t stack_bytes = std::size_t{256} << 20;
};

struct TaskOutcome {
  TaskId task;
  std::uint64_t completed_ns;
  bool failed;  // threw, or dropped at shutdown
};

struct RunReport {
  std::vector<std::uint64_t> resumes_per_worker;
  std::vector<std::uint64_t> completions_per_worker;
  std::uint64_t spawned = 0;
  std::uint64_t completed = 0;
  std::uint64_t pending = 0;
  std::uint64_t dropped = 0;
  std::uint64_t failed = 0;
  std::uint64_t double_resume_errors = 0;
  std::uint64_t wall_ns = 0;
  std::vector<TaskOutcome> outcomes;
  RunTrace trace;
};

namespace detail {

struct Worker {
  WorkerId id = 0;
  Executor* executor = nullptr;
  WorkStealingDeque<TaskPromise*> local;
  TaskPromise* direct_resume = nullptr;  // claimed (Running) continuation
  std::mt19937_64 rng;
  std::uintptr_t stack_base = 0;
  std::vector<TaskPromise*> batch;
  std::uint64_t resumes = 0;
  std::uint64_t completions = 0;
  std::uint64_t double_resume_errors = 0;
  std::vector<TaskOutcome> outcomes;
  std::vector<TaskEvent> task_events;
  std::vector<SyncEvent> sync_events;
  pthread_t thread{};
};

inline thread_local Worker* tls_worker = nullptr;
inline thread_local TaskPromise* tls_task = nullptr;

inline bool tracing() noexcept;

inline void record_task(TaskEventKind kind, TaskId task) noexcept {
#if CES_ENABLE_TRACE
  if (tracing()) tls_worker->task_events.push_back({kind, task, tls_worker->id, now_ns()});
#else
  (void)kind;
  (void)task;
#endif
}

inline void record_sync(std::uint64_t primitive, SyncEventKind kind, TaskId task,
                        TaskId peer = kNoTask, std::uint64_t t = 0) noexcept {
#if CES_ENABLE_TRACE
  if (tracing())
    tls_worker->sync_events.push_back(
        {primitive, task, peer, tls_worker->id, kind, t ? t : now_ns()});
#else
  (void)primitive;
  (void)kind;
  (void)task;
  (void)peer;
  (void)t;
#endif
}

/// Marks the running task Suspended and records the event. Call before the
/// continuation becomes reachable by any other thread.
inline void suspend_current(TaskPromise* self) noexcept {
  record_task(TaskEventKind::suspend, self->id());
  self->mark_suspended();
}

inline TaskPromise* running_task() {
  if (tls_worker == nullptr || tls_task == nullptr)
    throw usage_error("operation requires a running task");
  return tls_task;
}

inline std::uint64_t next_primitive_id() noexcept {
  static std::atomic<std::uint64_t> next{1};
  return next.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace detail

/// Fixed pool of workers. Each worker has a steal-visible local deque and a
/// direct-resume slot; a shared injector feeds all of them.
///
/// Lifecycle: construct, spawn, run() (blocks until every task completes or
/// shutdown() is requested), then the executor is closed.
class Executor {
 public:
  explicit Executor(ExecutorConfig config = {}) : config_(config) {
    if (config_.threads == 0) throw usage_error("executor needs at least one worker");
    std::seed_seq seq{config_.seed, config_.seed >> 32};
    std::vector<std::uint64_t> seeds(config_.threads);
    seq.generate(seeds.begin(), seeds.end());
    for (std::size_t i = 0; i < config_.threads; ++i) {
      auto w = std::make_unique<detail::Worker>();
      w->id = static_cast<WorkerId>(i);
      w->executor = this;
      w->rng.seed(seeds[i]);
      workers_.push_back(std::move(w));
    }
#if CES_ENABLE_TRACE
    trace_ = config_.trace;
#endif
  }

  Executor(const Executor&) = delete;
  Executor& operator=(const Executor&) = delete;

  ~Executor() {
    if (started_ && !joined_) stop_and_join();
    release_live(nullptr);
  }

  std::size_t thread_count() const noexcept { return workers_.size(); }
  const ExecutorConfig& config() const noexcept { return config_; }
  bool trace_enabled() const noexcept { return trace_; }

  /// Executor of the calling worker thread, or nullptr.
  static Executor* current() noexcept {
    return detail::tls_worker ? detail::tls_worker->executor : nullptr;
  }

  TaskHandle spawn(Task task) {
    if (closed_.load(std::memory_order_acquire)) throw executor_shut_down();
    auto h = task.release_handle();
    if (!h) throw usage_error("spawn of an empty task");
    TaskPromise& p = h.promise();
    p.executor_ = this;
    TaskHandle handle(&p);
    link_live(&p);
    spawned_.fetch_add(1, std::memory_order_relaxed);
    outstanding_.fetch_add(1, std::memory_order_acq_rel);
    push_injector(&p);
    return handle;
  }

  /// Makes a suspended (or not yet started) continuation runnable on any
  /// worker via the injector. Never uses the caller's direct-resume slot.
  void schedule(Continuation c) {
    TaskPromise* p = c.promise();
    if (p == nullptr) throw usage_error("schedule of an empty continuation");
    TaskState s = p->state();
    if (s != TaskState::suspended && s != TaskState::created)
      throw state_error("schedule: continuation is neither suspended nor created");
    if (closed_.load(std::memory_order_acquire)) {
      std::lock_guard lock(live_mu_);
      dropped_outcomes_.push_back({p->id(), now_ns(), true});
      return;
    }
    push_injector(p);
  }

  /// Suspends `current` (the running task) to the injector and makes `next`
  /// the very next continuation this worker runs. Call from the
  /// await_suspend of `current`; the caller must not touch its frame after.
  void switch_to(Continuation current, Continuation next) {
    detail::Worker* w = detail::tls_worker;
    if (w == nullptr || w->executor != this || detail::tls_task != current.promise())
      throw usage_error("switch_to must be called by the running task on a worker");
    if (!next || !next.promise()->try_claim_suspended())
      throw state_error("switch_to: next continuation is not suspended");
    detail::suspend_current(current.promise());
    w->direct_resume = next.promise();
    push_injector(current.promise());
  }

  /// Puts an already suspended `next` into this worker's direct-resume slot
  /// without rescheduling the running task (which has parked itself
  /// elsewhere).
  void resume_next_here(Continuation next) {
    detail::Worker* w = detail::tls_worker;
    if (w == nullptr || w->executor != this) throw usage_error("resume_next_here off-worker");
    if (!next.promise()->try_claim_suspended())
      throw state_error("resume_next_here: continuation is not suspended");
    w->direct_resume = next.promise();
  }

  /// Runs `next` as a nested call on the current worker until it suspends or
  /// completes. The caller does not suspend.
  void resume_inline(Continuation next) {
    detail::Worker* w = detail::tls_worker;
    if (w == nullptr || w->executor != this || detail::tls_task == nullptr)
      throw usage_error("resume_inline must be called from a running task");
    if (!next || !next.promise()->try_claim_suspended())
      throw state_error("resume_inline: continuation is not suspended");
    run_claimed(*w, next.promise());
    // A nested task may have handed off via the slot; honour it before the
    // caller continues.
    drain_direct_resume(*w);
  }

  /// Starts the workers and blocks until all tasks complete or shutdown()
  /// is requested.
  RunReport run() {
    if (run_called_.exchange(true)) throw usage_error("executor run called twice");
    std::uint64_t t0 = now_ns();
    start_workers();
    for (;;) {
      std::uint32_t v = done_signal_.load(std::memory_order_acquire);
      if (v != 0) break;
      if (outstanding_.load(std::memory_order_acquire) == 0) break;
      done_signal_.wait(0, std::memory_order_acquire);
    }
    stop_and_join();
    std::uint64_t t1 = now_ns();
    return collect_report(t1 - t0);
  }

  /// Requests run() to return. Tasks still pending are counted in the report
  /// and dropped. Callable from any thread, including a worker.
  void shutdown() noexcept {
    shutdown_requested_.store(true, std::memory_order_release);
    done_signal_.store(1, std::memory_order_release);
    done_signal_.notify_all();
  }

  bool shut_down() const noexcept { return closed_.load(std::memory_order_acquire); }

  // Called by the final-suspend hook.
  void on_task_complete(TaskPromise& p) noexcept {
    detail::Worker* w = detail::tls_worker;
    if (w) {
      ++w->completions;
      w->outcomes.push_back({p.id(), p.completed_ns_, p.failed_});
    }
    unlink_live(&p);
    if (outstanding_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
      done_signal_.store(1, std::memory_order_release);
      done_signal_.notify_all();
    }
  }

  // Used by yield_now.
  void push_local_current(TaskPromise* p) {
    detail::tls_worker->local.push(p);
    notify_work();
  }

 private:
  static void* thread_entry(void* arg) {
    auto* w = static_cast<detail::Worker*>(arg);
    w->executor->worker_main(*w);
    return nullptr;
  }

  void start_workers() {
    started_ = true;
    pthread_attr_t attr;
    pthread_attr_init(&attr);
    pthread_attr_setstacksize(&attr, config_.stack_bytes);
    for (auto& w : workers_) {
      int rc = pthread_create(&w->thread, &attr, &Executor::thread_entry, w.get());
      if (rc != 0) {
        pthread_attr_destroy(&attr);
        throw std::system_error(rc, std::generic_category(), "pthread_create");
      }
    }
    pthread_attr_destroy(&attr);
  }

  void stop_and_join() {
    closed_.store(true, std::memory_order_release);
    stopping_.store(true, std::memory_order_release);
    epoch_.fetch_add(1, std::memory_order_seq_cst);
    epoch_.notify_all();
    for (auto& w : workers_) pthread_join(w->thread, nullptr);
    joined_ = true;
  }

  void worker_main(detail::Worker& w) {
    detail::tls_worker = &w;
    char base_marker = 0;
    w.stack_base = reinterpret_cast<std::uintptr_t>(&base_marker);
    std::uint32_t idle_rounds = 0;
    for (;;) {
      if (TaskPromise* p = find_work(w)) {
        idle_rounds = 0;
        if (p->try_claim()) {
          run_claimed(w, p);
        } else {
          ++w.double_resume_errors;
        }
        drain_direct_resume(w);
        continue;
      }
      if (stopping_.load(std::memory_order_acquire)) break;
      idle(w, idle_rounds);
    }
    detail::tls_worker = nullptr;
  }

  void run_claimed(detail::Worker& w, TaskPromise* p) {
    TaskPromise* prev = detail::tls_task;
    detail::tls_task = p;
    ++w.resumes;
    detail::record_task(TaskEventKind::resume, p->id());
    p->handle().resume();
    detail::tls_task = prev;
  }

  void drain_direct_resume(detail::Worker& w) {
    while (TaskPromise* next = w.direct_resume) {
      w.direct_resume = nullptr;
      run_claimed(w, next);
    }
  }

  TaskPromise* find_work(detail::Worker& w) {
    if (TaskPromise* p = w.local.take()) return p;
    if (!injector_.empty()) {
      w.batch.clear();
      std::size_t want = std::min<std::size_t>(kMaxInjectorBatch,
                                               1 + injector_.size() / workers_.size());
      if (injector_.pop_batch(want, w.batch) > 0) {
        for (std::size_t i = 1; i < w.batch.size(); ++i) w.local.push(w.batch[i]);
        if (w.batch.size() > 1) notify_work();
        return w.batch.front();
      }
    }
    std::size_t n = workers_.size();
    if (n > 1) {
      for (std::size_t attempt = 0; attempt < 2 * n; ++attempt) {
        std::size_t victim = static_cast<std::size_t>(w.rng() % n);
        if (victim == w.id) continue;
        if (TaskPromise* p = workers_[victim]->local.steal()) return p;
      }
    }
    return nullptr;
  }

  bool has_visible_work() const noexcept {
    if (!injector_.empty()) return true;
    for (const auto& w : workers_)
      if (!w->local.empty()) return true;
    return false;
  }

  void idle(detail::Worker&, std::uint32_t& rounds) {
    ++rounds;
    if (rounds < kSpinRounds) {
      cpu_relax();
      return;
    }
    if (rounds < kSpinRounds + kYieldRounds) {
      std::this_thread::yield();
      return;
    }
    std::uint32_t e = epoch_.load(std::memory_order_seq_cst);
    sleepers_.fetch_add(1, std::memory_order_seq_cst);
    if (!has_visible_work() && !stopping_.load(std::memory_order_seq_cst))
      epoch_.wait(e, std::memory_order_seq_cst);
    sleepers_.fetch_sub(1, std::memory_order_seq_cst);
    rounds = 0;
  }

  void notify_work() noexcept {
    epoch_.fetch_add(1, std::memory_order_seq_cst);
    if (sleepers_.load(std::memory_order_seq_cst) > 0) epoch_.notify_one();
  }

  void push_injector(TaskPromise* p) {
    injector_.push(p);
    notify_work();
  }

  void link_live(TaskPromise* p) {
    std::lock_guard lock(live_mu_);
    p->live_prev_ = nullptr;
    p->live_next_ = live_head_;
    if (live_head_) live_head_->live_prev_ = p;
    live_head_ = p;
  }

  void unlink_live(TaskPromise* p) {
    std::lock_guard lock(live_mu_);
    if (p->live_prev_) p->live_prev_->live_next_ = p->live_next_;
    else live_head_ = p->live_next_;
    if (p->live_next_) p->live_next_->live_prev_ = p->live_prev_;
    p->live_prev_ = p->live_next_ = nullptr;
  }

  // Drops every task that never completed. Returns how many.
  std::uint64_t release_live(std::vector<TaskOutcome>* outcomes) {
    std::vector<TaskPromise*> pending;
    {
      std::lock_guard lock(live_mu_);
      for (TaskPromise* p = live_head_; p; p = p->live_next_) pending.push_back(p);
      live_head_ = nullptr;
    }
    std::uint64_t t = now_ns();
    for (TaskPromise* p : pending) {
      if (outcomes) outcomes->push_back({p->id(), t, true});
      p->finished_.store(true, std::memory_order_release);
      p->finished_.notify_all();
      p->release();
    }
    return pending.size();
  }

  RunReport collect_report(std::uint64_t wall) {
    RunReport r;
    r.wall_ns = wall;
    r.spawned = spawned_.load();
    for (auto& w : workers_) {
      r.resumes_per_worker.push_back(w->resumes);
      r.completions_per_worker.push_back(w->completions);
      r.completed += w->completions;
      r.double_resume_errors += w->double_resume_errors;
      for (auto& o : w->outcomes) {
        if (o.failed) ++r.failed;
        r.outcomes.push_back(o);
      }
      r.trace.task_events.push_back(std::move(w->task_events));
      r.trace.sync_events.push_back(std::move(w->sync_events));
    }
    injector_.drain();
    r.pending = release_live(&r.outcomes);
    {
      std::lock_guard lock(live_mu_);
      r.dropped = dropped_outcomes_.size();
      r.outcomes.insert(r.outcomes.end(), dropped_outcomes_.begin(), dropped_outcomes_.end());
    }
    return r;
  }

  static constexpr std::size_t kMaxInjectorBatch = 32;
  static constexpr std::uint32_t kSpinRounds = 64;
  static constexpr std::uint32_t kYieldRounds = 16;

  friend bool detail::tracing() noexcept;

  ExecutorConfig config_;
  bool trace_ = false;
  std::vector<std::unique_ptr<detail::Worker>> workers_;
  Injector<TaskPromise*> injector_;

  alignas(64) std::atomic<std::uint32_t> epoch_{0};
  alignas(64) std::atomic<std::uint32_t> sleepers_{0};
  std::atomic<bool> stopping_{false};
  std::atomic<bool> closed_{false};
  std::atomic<bool> run_called_{false};
  std::atomic<bool> shutdown_requested_{false};
  std::atomic<std::uint32_t> done_signal_{0};
  std::atomic<std::uint64_t> outstanding_{0};
  std::atomic<std::uint64_t> spawned_{0};
  bool started_ = false;
  bool joined_ = false;

  std::mutex live_mu_;
  TaskPromise* live_head_ = nullptr;
  std::vector<TaskOutcome> dropped_outcomes_;
};

namespace detail {

inline bool tracing() noexcept {
  return tls_worker != nullptr && tls_worker->executor->trace_;
}

}  // namespace detail

inline void TaskPromise::FinalAwaiter::await_suspend(std::coroutine_handle<TaskPromise> h) noexcept {
  TaskPromise& p = h.promise();
  p.completed_ns_ = now_ns();
  detail::record_task(TaskEventKind::complete, p.id());
  p.state_.store(TaskState::completed, std::memory_order_release);
  if (p.executor_) p.executor_->on_task_complete(p);
  p.finished_.store(true, std::memory_order_release);
  p.finished_.notify_all();
  p.release();
}

// ---------------------------------------------------------------------------
// Verbs usable from inside a task.

/// Suspends the running task to the back of this worker's local deque.
inline auto yield_now() {
  struct Awaiter {
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<>) const {
      TaskPromise* self = detail::running_task();
      Executor* ex = detail::tls_worker->executor;
      detail::suspend_current(self);
      ex->push_local_current(self);
    }
    void await_resume() const noexcept {}
  };
  return Awaiter{};
}

/// Suspends the running task, injects it, and runs `next` immediately on
/// this worker.
inline auto switch_to(Continuation next) {
  struct Awaiter {
    Continuation next;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<>) const {
      TaskPromise* self = detail::running_task();
      Continuation n = next;
      detail::tls_worker->executor->switch_to(Continuation{self}, n);
    }
    void await_resume() const noexcept {}
  };
  return Awaiter{next};
}

/// Runs `next` nested on this worker; the caller does not suspend.
inline void resume_inline(Continuation next) {
  detail::running_task();
  detail::tls_worker->executor->resume_inline(next);
}

/// Suspends the running task and hands its continuation to `fn`, which may
/// publish it anywhere. The task resumes when someone schedules it.
template <typename F>
auto suspend_with(F fn) {
  struct Awaiter {
    F fn;
    bool await_ready() const noexcept { return false; }
    void await_suspend(std::coroutine_handle<>) {
      TaskPromise* self = detail::running_task();
      detail::suspend_current(self);
      F f = std::move(fn);
      f(Continuation{self});
    }
    void await_resume() const noexcept {}
  };
  return Awaiter{std::move(fn)};
}

namespace this_task {

inline Continuation continuation() { return Continuation{detail::running_task()}; }
inline TaskId id() { return detail::running_task()->id(); }

}  // namespace this_task

namespace this_worker {

/// Worker index of the calling thread, or -1 off-worker.
inline int id() noexcept {
  return detail::tls_worker ? static_cast<int>(detail::tls_worker->id) : -1;
}

/// Bytes of native stack in use below the worker loop's frame.
[[gnu::noinline]] inline std::size_t stack_depth_bytes() noexcept {
  if (!detail::tls_worker) return 0;
  auto here = reinterpret_cast<std::uintptr_t>(__builtin_frame_address(0));
  auto base = detail::tls_worker->stack_base;
  return base > here ? base - here : 0;
}

}  // namespace this_worker

}  // namespace ces
