#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ces/clock.hpp"
#include "ces/errors.hpp"
#include "ces/trace.hpp"

namespace ces {

// ---------------------------------------------------------------------------
// Order statistics

/// Linear-interpolated quantile of an ascending sample (q in [0, 1]).
inline double quantile_sorted(const std::vector<std::uint64_t>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = static_cast<std::size_t>(std::ceil(pos));
  double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) +
         frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

struct Summary {
  std::size_t count = 0;
  double median = 0;
  double p95 = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
};

inline Summary summarize(std::vector<std::uint64_t> values) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.median = quantile_sorted(values, 0.5);
  s.p95 = quantile_sorted(values, 0.95);
  s.min = values.front();
  s.max = values.back();
  return s;
}

// ---------------------------------------------------------------------------
// Handoff reconstruction

/// One contended critical-section entry: a releasing task granted ownership
/// to a waiter, either on its own worker (handoff) or through the injector
/// (dispatch).
struct HandoffRecord {
  std::uint64_t primitive;
  TaskId waiter;
  TaskId releaser;
  SyncEventKind kind;  // handoff or dispatch
  std::uint64_t t_exit;   // releaser left its critical section
  std::uint64_t t_grant;  // releaser handed off / scheduled the waiter
  std::uint64_t t_enter;  // waiter entered
  WorkerId releaser_worker;
  WorkerId waiter_worker;
};

/// Critical-section entry in time order for one primitive.
struct EntryRecord {
  TaskId task;
  WorkerId worker;
  std::uint64_t t_enter;
  bool contended;
};

struct HandoffAnalysis {
  std::vector<HandoffRecord> handoffs;
  std::map<std::uint64_t, std::vector<EntryRecord>> entries;  // by primitive
};

/// Pairs every contended entry with the grant that released it. A waiter's
/// k-th contended entry into a primitive pairs with its k-th grant there;
/// both sequences are causally ordered, so this does not depend on clock
/// ties across workers.
inline HandoffAnalysis analyze_handoffs(const RunTrace& trace) {
  struct Grant {
    SyncEventKind kind;
    TaskId releaser;
    std::uint64_t t;
    WorkerId worker;
  };
  struct PerTask {
    bool waiting = false;
    std::vector<std::pair<std::uint64_t, WorkerId>> contended_enters;
    std::vector<Grant> grants;
  };
  struct PerPrimitive {
    std::unordered_map<TaskId, PerTask> tasks;
    std::unordered_map<TaskId, std::vector<std::uint64_t>> exits;
  };

  std::map<std::uint64_t, PerPrimitive> prims;
  HandoffAnalysis out;
  for (const SyncEvent& e : trace.merged_sync_events()) {
    PerPrimitive& pp = prims[e.primitive];
    switch (e.kind) {
      case SyncEventKind::enq:
        pp.tasks[e.task].waiting = true;
        break;
      case SyncEventKind::enter: {
        PerTask& t = pp.tasks[e.task];
        out.entries[e.primitive].push_back({e.task, e.worker, e.t_ns, t.waiting});
        if (t.waiting) t.contended_enters.emplace_back(e.t_ns, e.worker);
        t.waiting = false;
        break;
      }
      case SyncEventKind::exit:
        pp.exits[e.task].push_back(e.t_ns);
        break;
      case SyncEventKind::handoff:
      case SyncEventKind::dispatch:
        pp.tasks[e.task].grants.push_back({e.kind, e.peer, e.t_ns, e.worker});
        break;
    }
  }

  for (auto& [prim, pp] : prims) {
    for (auto& [task, t] : pp.tasks) {
      if (t.contended_enters.size() > t.grants.size())
        throw trace_error("contended entry of task " + std::to_string(task) + " into primitive " +
                          std::to_string(prim) + " has no handoff or schedule event");
      for (std::size_t k = 0; k < t.contended_enters.size(); ++k) {
        const Grant& g = t.grants[k];
        std::uint64_t t_exit = g.t;
        auto it = pp.exits.find(g.releaser);
        if (it != pp.exits.end()) {
          auto& ex = it->second;
          auto pos = std::upper_bound(ex.begin(), ex.end(), g.t);
          if (pos != ex.begin()) t_exit = *std::prev(pos);
        }
        out.handoffs.push_back({prim, task, g.releaser, g.kind, t_exit, g.t,
                                t.contended_enters[k].first, g.worker,
                                t.contended_enters[k].second});
      }
    }
  }
  std::sort(out.handoffs.begin(), out.handoffs.end(),
            [](const HandoffRecord& a, const HandoffRecord& b) { return a.t_enter < b.t_enter; });
  return out;
}

// ---------------------------------------------------------------------------
// Queuing delay

/// t_sync: releaser's exit until the waiter was scheduled.
/// t_queue: scheduled until the waiter entered the critical section.
struct DelaySample {
  std::uint64_t mutex_id;
  TaskId task;
  std::uint64_t t_sync_ns;
  std::uint64_t t_queue_ns;
  std::uint64_t delta_t_opt_ns;  // t_sync + t_queue
};

struct QueuingDelayReport {
  std::vector<DelaySample> samples;
  Summary t_queue;
  Summary t_sync;
  Summary delta_t_opt;
};

/// One sample per dispatched handoff. Requires a traced run; throws
/// trace_error if the trace has no schedule events or a contended entry
/// cannot be matched to one.
inline QueuingDelayReport measure_queuing_delay(const RunTrace& trace) {
  HandoffAnalysis a = analyze_handoffs(trace);
  QueuingDelayReport r;
  for (const auto& h : a.handoffs) {
    if (h.kind != SyncEventKind::dispatch) continue;
    std::uint64_t sync = h.t_grant - h.t_exit;
    std::uint64_t queue = h.t_enter >= h.t_grant ? h.t_enter - h.t_grant : 0;
    r.samples.push_back({h.primitive, h.waiter, sync, queue, sync + queue});
  }
  if (r.samples.empty()) {
    bool any_contended = !a.handoffs.empty();
    throw trace_error(any_contended ? "trace has contended entries but no schedule events"
                                    : "trace has no contended dispatch handoffs");
  }
  std::vector<std::uint64_t> q, s, d;
  for (auto& x : r.samples) {
    q.push_back(x.t_queue_ns);
    s.push_back(x.t_sync_ns);
    d.push_back(x.delta_t_opt_ns);
  }
  r.t_queue = summarize(std::move(q));
  r.t_sync = summarize(std::move(s));
  r.delta_t_opt = summarize(std::move(d));
  return r;
}

/// Exit-to-entry gap of every contended entry of the given kind.
inline std::vector<std::uint64_t> handoff_gaps(const RunTrace& trace, SyncEventKind kind) {
  std::vector<std::uint64_t> gaps;
  for (const auto& h : analyze_handoffs(trace).handoffs)
    if (h.kind == kind) gaps.push_back(h.t_enter >= h.t_exit ? h.t_enter - h.t_exit : 0);
  return gaps;
}

/// `mutex_id,task_id,t_sync_ns,t_queue_ns`
inline void write_delay_csv(std::ostream& out, const QueuingDelayReport& r) {
  out << "mutex_id,task_id,t_sync_ns,t_queue_ns\n";
  for (const auto& s : r.samples)
    out << s.mutex_id << ',' << s.task << ',' << s.t_sync_ns << ',' << s.t_queue_ns << '\n';
}

// ---------------------------------------------------------------------------
// Thread affinity of critical sections

struct AffinityEntry {
  WorkerId worker;
  std::uint64_t t_enter;
  bool contended;  // waiter queue was non-empty at the preceding unlock
};

struct AffinityTrace {
  std::map<std::uint64_t, std::vector<AffinityEntry>> per_resource;

  std::size_t total_entries() const {
    std::size_t n = 0;
    for (auto& [_, v] : per_resource) n += v.size();
    return n;
  }
};

inline AffinityTrace build_affinity_trace(const RunTrace& trace) {
  AffinityTrace at;
  for (auto& [prim, entries] : analyze_handoffs(trace).entries) {
    auto& seq = at.per_resource[prim];
    for (auto& e : entries) seq.push_back({e.worker, e.t_enter, e.contended});
  }
  return at;
}

/// `resource_id,seq,worker_id,contended`
inline void write_affinity_csv(std::ostream& out, const AffinityTrace& at) {
  out << "resource_id,seq,worker_id,contended\n";
  for (const auto& [res, seq] : at.per_resource)
    for (std::size_t i = 0; i < seq.size(); ++i)
      out << res << ',' << i << ',' << seq[i].worker << ',' << (seq[i].contended ? 1 : 0) << '\n';
}

struct ResourceAffinity {
  std::uint64_t resource = 0;
  std::size_t entries = 0;
  std::size_t contended = 0;
  std::size_t contended_same_worker = 0;
  std::size_t worker_changes = 0;  // consecutive entries on different workers
  double same_worker_fraction = 1.0;
};

struct AffinityReport {
  std::vector<ResourceAffinity> resources;
  std::size_t contended = 0;
  std::size_t contended_same_worker = 0;
  std::size_t worker_changes = 0;
  std::size_t uncontended_worker_changes = 0;
  double same_worker_fraction = 1.0;  // over contended handoffs; 1 if none
};

inline AffinityReport validate_affinity(const AffinityTrace& at) {
  if (at.total_entries() == 0) throw trace_error("no critical-section entries in trace");
  AffinityReport r;
  for (const auto& [res, seq] : at.per_resource) {
    ResourceAffinity ra;
    ra.resource = res;
    ra.entries = seq.size();
    for (std::size_t i = 1; i < seq.size(); ++i) {
      bool same = seq[i].worker == seq[i - 1].worker;
      if (!same) {
        ++ra.worker_changes;
        if (!seq[i].contended) ++r.uncontended_worker_changes;
      }
      if (seq[i].contended) {
        ++ra.contended;
        if (same) ++ra.contended_same_worker;
      }
    }
    if (ra.contended)
      ra.same_worker_fraction =
          static_cast<double>(ra.contended_same_worker) / static_cast<double>(ra.contended);
    r.contended += ra.contended;
    r.contended_same_worker += ra.contended_same_worker;
    r.worker_changes += ra.worker_changes;
    r.resources.push_back(ra);
  }
  if (r.contended)
    r.same_worker_fraction =
        static_cast<double>(r.contended_same_worker) / static_cast<double>(r.contended);
  return r;
}

inline AffinityReport validate_affinity(const RunTrace& trace) {
  return validate_affinity(build_affinity_trace(trace));
}

// ---------------------------------------------------------------------------
// Critical-section length

struct CsLengthStats {
  /// bucket 0: [0, 2) ns; bucket i > 0: [2^i, 2^(i+1)) ns.
  std::array<std::uint64_t, 64> histogram{};
  std::size_t count = 0;
  double median = 0;
  double p95 = 0;
  std::vector<std::uint64_t> samples;  // ascending

  static std::size_t bucket_of(std::uint64_t ns) noexcept {
    if (ns < 2) return 0;
    return static_cast<std::size_t>(63 - __builtin_clzll(ns));
  }
};

inline CsLengthStats cs_length_stats(std::vector<std::uint64_t> durations) {
  CsLengthStats s;
  std::sort(durations.begin(), durations.end());
  for (auto d : durations) ++s.histogram[CsLengthStats::bucket_of(d)];
  s.count = durations.size();
  s.median = quantile_sorted(durations, 0.5);
  s.p95 = quantile_sorted(durations, 0.95);
  s.samples = std::move(durations);
  return s;
}

/// Durations from enter/exit pairs per (primitive, task), with the clock's
/// own read cost subtracted. Throws trace_error on an unmatched event.
inline CsLengthStats cs_length_stats(const RunTrace& trace) {
  const std::uint64_t overhead = clock_overhead_ns();
  std::map<std::pair<std::uint64_t, TaskId>, std::uint64_t> open;
  std::vector<std::uint64_t> durations;
  for (const SyncEvent& e : trace.merged_sync_events()) {
    auto key = std::make_pair(e.primitive, e.task);
    if (e.kind == SyncEventKind::enter) {
      if (!open.emplace(key, e.t_ns).second)
        throw trace_error("task " + std::to_string(e.task) + " entered twice without exit");
    } else if (e.kind == SyncEventKind::exit) {
      auto it = open.find(key);
      if (it == open.end())
        throw trace_error("exit without enter for task " + std::to_string(e.task));
      std::uint64_t d = e.t_ns - it->second;
      durations.push_back(d > overhead ? d - overhead : 0);
      open.erase(it);
    }
  }
  if (!open.empty()) throw trace_error("critical section entered but never exited");
  return cs_length_stats(std::move(durations));
}

}  // namespace ces
