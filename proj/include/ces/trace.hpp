#pragma once

#include <algorithm>
#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

// Trace recording is compiled out unless the including target opts in.
#ifndef CES_ENABLE_TRACE
#define CES_ENABLE_TRACE 0
#endif

namespace ces {

using TaskId = std::uint64_t;
using WorkerId = std::uint32_t;

inline constexpr TaskId kNoTask = 0;

enum class TaskEventKind : std::uint8_t { resume, suspend, complete };

struct TaskEvent {
  TaskEventKind kind;
  TaskId task;
  WorkerId worker;
  std::uint64_t t_ns;
};

enum class SyncEventKind : std::uint8_t {
  enq,       // task appended to a waiter queue
  enter,     // task entered the critical section
  exit,      // task left the critical section
  handoff,   // waiter resumed on the releasing worker
  dispatch,  // waiter pushed to the executor's injector
};

/// One synchronization event. For handoff and dispatch, `task` is the waiter
/// being woken and `peer` the task that released it.
struct SyncEvent {
  std::uint64_t primitive;
  TaskId task;
  TaskId peer;
  WorkerId worker;
  SyncEventKind kind;
  std::uint64_t t_ns;
};

inline std::string_view to_string(TaskEventKind k) noexcept {
  switch (k) {
    case TaskEventKind::resume: return "resume";
    case TaskEventKind::suspend: return "suspend";
    case TaskEventKind::complete: return "complete";
  }
  return "?";
}

inline std::string_view to_string(SyncEventKind k) noexcept {
  switch (k) {
    case SyncEventKind::enq: return "enq";
    case SyncEventKind::enter: return "enter";
    case SyncEventKind::exit: return "exit";
    case SyncEventKind::handoff: return "handoff";
    case SyncEventKind::dispatch: return "dispatch";
  }
  return "?";
}

/// Events of one run. Buffers are per worker and in program order for that
/// worker; the merged views are ordered by timestamp with ties broken by
/// worker id and then per-worker order.
struct RunTrace {
  std::vector<std::vector<TaskEvent>> task_events;  // indexed by worker
  std::vector<std::vector<SyncEvent>> sync_events;  // indexed by worker

  std::vector<TaskEvent> merged_task_events() const { return merge(task_events); }
  std::vector<SyncEvent> merged_sync_events() const { return merge(sync_events); }

  bool empty() const noexcept {
    for (auto& v : task_events)
      if (!v.empty()) return false;
    for (auto& v : sync_events)
      if (!v.empty()) return false;
    return true;
  }

  /// `event,task_id,worker_id,timestamp_ns`
  void write_task_csv(std::ostream& out) const {
    out << "event,task_id,worker_id,timestamp_ns\n";
    for (const auto& e : merged_task_events())
      out << to_string(e.kind) << ',' << e.task << ',' << e.worker << ',' << e.t_ns << '\n';
  }

 private:
  template <typename E>
  static std::vector<E> merge(const std::vector<std::vector<E>>& per_worker) {
    struct Keyed {
      E e;
      std::size_t seq;
    };
    std::vector<Keyed> all;
    for (const auto& buf : per_worker)
      for (std::size_t i = 0; i < buf.size(); ++i) all.push_back({buf[i], i});
    std::stable_sort(all.begin(), all.end(), [](const Keyed& a, const Keyed& b) {
      if (a.e.t_ns != b.e.t_ns) return a.e.t_ns < b.e.t_ns;
      if (a.e.worker != b.e.worker) return a.e.worker < b.e.worker;
      return a.seq < b.seq;
    });
    std::vector<E> out;
    out.reserve(all.size());
    for (auto& k : all) out.push_back(k.e);
    return out;
  }
};

}  // namespace ces
