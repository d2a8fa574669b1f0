#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ces/clock.hpp"
#include "ces/errors.hpp"
#include "ces/executor.hpp"
#include "ces/metrics.hpp"
#include "ces/mutex.hpp"
#include "ces/policy.hpp"
#include "ces/rw_mutex.hpp"
#include "ces/semaphore.hpp"

namespace ces::bench {

enum class BenchKind : std::uint8_t { mutex, rwlock, semaphore, affinity, queuing_delay };

inline constexpr std::string_view to_string(BenchKind k) noexcept {
  switch (k) {
    case BenchKind::mutex: return "mutex";
    case BenchKind::rwlock: return "rwlock";
    case BenchKind::semaphore: return "semaphore";
    case BenchKind::affinity: return "affinity";
    case BenchKind::queuing_delay: return "queuing-delay";
  }
  return "?";
}

inline std::optional<BenchKind> parse_bench(std::string_view s) noexcept {
  for (auto k : {BenchKind::mutex, BenchKind::rwlock, BenchKind::semaphore, BenchKind::affinity,
                 BenchKind::queuing_delay})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Workload kernels

inline constexpr std::uint32_t kPrimeLow = 1u << 19;
inline constexpr std::size_t kPrimeCount = 1000;

/// The 1000 smallest primes >= 2^19 (all below 2^20).
inline const std::vector<std::uint32_t>& primes() {
  static const std::vector<std::uint32_t> table = [] {
    std::vector<std::uint32_t> out;
    for (std::uint32_t n = kPrimeLow; out.size() < kPrimeCount; ++n) {
      bool prime = n % 2 != 0;
      for (std::uint32_t d = 3; prime && d * d <= n; d += 2)
        if (n % d == 0) prime = false;
      if (prime) out.push_back(n);
    }
    return out;
  }();
  return table;
}

/// Trial division up to sqrt(n). Writes prime factors in ascending order to
/// `out` (room for 32) and returns how many.
inline std::size_t factorize(std::uint32_t n, std::uint32_t* out) noexcept {
  std::size_t k = 0;
  if (n < 2) return 0;
  while (n % 2 == 0) {
    out[k++] = 2;
    n /= 2;
  }
  for (std::uint32_t d = 3; d * d <= n; d += 2) {
    while (n % d == 0) {
      out[k++] = d;
      n /= d;
    }
  }
  if (n > 1) out[k++] = n;
  return k;
}

/// Sum of the prime factors of n. Equals n for the benchmark's primes.
inline std::uint64_t factor_sum(std::uint32_t n) noexcept {
  std::uint32_t f[32];
  std::size_t k = factorize(n, f);
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < k; ++i) s += f[i];
  return s;
}

inline std::uint64_t task_seed(std::uint64_t seed, std::uint64_t task_index) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (task_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Per-task random stream. The draw sequence depends only on (seed, task),
/// so every policy sees the same accesses.
class Draws {
 public:
  Draws(std::uint64_t seed, std::uint64_t task_index) : rng_(task_seed(seed, task_index)) {}

  std::uint32_t prime() { return primes()[rng_() % kPrimeCount]; }
  std::size_t resource(std::size_t r) { return static_cast<std::size_t>(rng_() % r); }
  bool writer(double pct) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 * 100.0 < pct; }

 private:
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Configuration and results

struct BenchConfig {
  BenchKind bench = BenchKind::mutex;
  UnlockPolicy policy = UnlockPolicy::ces;
  std::size_t threads = 8;
  std::size_t tasks = 5000;
  std::size_t iters = 1000;
  std::uint64_t cs_ns = 0;
  double writer_pct = 50.0;  // rwlock only
  std::size_t resources = 4;  // affinity: mutexes; semaphore: permits
  std::uint64_t seed = 1;
  bool trace = false;  // forced on for affinity and queuing-delay
};

inline constexpr double kWriterPercentages[] = {50.0, 25.0, 12.5, 6.25};

/// Throws usage_error when the configuration cannot be run.
inline void validate(const BenchConfig& c) {
  if (c.threads < 1) throw usage_error("threads must be >= 1");
  if (c.tasks < 1) throw usage_error("tasks must be >= 1");
  if (c.iters < 1) throw usage_error("iters must be >= 1");
  if (c.resources < 1) throw usage_error("resources must be >= 1");
  if (c.bench == BenchKind::rwlock &&
      std::find(std::begin(kWriterPercentages), std::end(kWriterPercentages), c.writer_pct) ==
          std::end(kWriterPercentages))
    throw usage_error("writer percentage must be one of 50, 25, 12.5, 6.25");
  if (c.bench == BenchKind::queuing_delay && c.policy != UnlockPolicy::dispatch)
    throw usage_error("the queuing-delay bench requires the dispatch policy");
}

struct BenchRecord {
  BenchConfig config;
  std::uint64_t wall_ns = 0;
  std::uint64_t completed_iterations = 0;
  double throughput_ops_s = 0;
  std::vector<std::uint64_t> per_worker_tasks;
  bool valid = true;
  std::string invalid_reason;
  std::vector<double> run_throughputs;  // all measured runs when repeated
  RunTrace trace;
};

namespace detail {

inline void finish(BenchRecord& r, const RunReport& rep, std::uint64_t completed) {
  r.wall_ns = rep.wall_ns;
  r.completed_iterations = completed;
  r.throughput_ops_s =
      rep.wall_ns ? static_cast<double>(completed) * 1e9 / static_cast<double>(rep.wall_ns) : 0.0;
  r.per_worker_tasks = rep.completions_per_worker;
  if (rep.failed || rep.pending || rep.completed != r.config.tasks) {
    r.valid = false;
    r.invalid_reason = "tasks did not all complete";
  }
}

inline void invalidate(BenchRecord& r, std::string why) {
  if (!r.valid) return;
  r.valid = false;
  r.invalid_reason = std::move(why);
}

inline ExecutorConfig executor_config(const BenchConfig& c) {
  ExecutorConfig e;
  e.threads = c.threads;
  e.seed = c.seed;
  e.trace = c.trace || c.bench == BenchKind::affinity || c.bench == BenchKind::queuing_delay;
  return e;
}

// Mutex benchmark

template <UnlockPolicy P>
struct MutexShared {
  BasicMutex<P> m;
  std::map<std::uint32_t, std::uint32_t> map;
  std::uint64_t cs_count = 0;  // deliberately non-atomic
  std::uint64_t cs_ns = 0;
  std::atomic<std::uint64_t> sink{0};
};

template <UnlockPolicy P>
Task mutex_task(MutexShared<P>* s, std::uint64_t seed, std::size_t index, std::size_t iters) {
  Draws d(seed, index);
  std::uint64_t local = 0;
  for (std::size_t i = 0; i < iters; ++i) {
    std::uint32_t p = d.prime();
    co_await s->m.lock();
    s->map.insert({p, p});
    ++s->cs_count;
    if (s->cs_ns) busy_wait_ns(s->cs_ns);
    co_await s->m.unlock();
    local += factor_sum(p);
  }
  s->sink.fetch_add(local, std::memory_order_relaxed);
}

// Reader-writer benchmark

template <UnlockPolicy P>
struct RwShared {
  BasicRwMutex<P> rw;
  std::map<std::uint32_t, std::uint32_t> map;
  std::uint64_t cs_ns = 0;
  double writer_pct = 50;
  std::atomic<int> readers_in{0};
  std::atomic<int> writers_in{0};
  std::atomic<bool> violation{false};
  std::atomic<std::uint64_t> completed{0};
  std::atomic<std::uint64_t> sink{0};
};

template <UnlockPolicy P>
Task rw_task(RwShared<P>* s, std::uint64_t seed, std::size_t index, std::size_t iters) {
  Draws d(seed, index);
  std::uint64_t local = 0;
  for (std::size_t i = 0; i < iters; ++i) {
    bool w = d.writer(s->writer_pct);
    std::uint32_t p = d.prime();
    if (w) {
      co_await s->rw.lock_write();
      if (s->writers_in.fetch_add(1) != 0 || s->readers_in.load() != 0) s->violation = true;
      s->map.insert({p, p});
      if (s->cs_ns) busy_wait_ns(s->cs_ns);
      s->writers_in.fetch_sub(1);
      co_await s->rw.unlock_write();
    } else {
      co_await s->rw.lock_read();
      s->readers_in.fetch_add(1);
      if (s->writers_in.load() != 0) s->violation = true;
      auto it = s->map.find(p);
      if (it != s->map.end() && it->second != p) s->violation = true;
      if (s->cs_ns) busy_wait_ns(s->cs_ns);
      s->readers_in.fetch_sub(1);
      co_await s->rw.unlock_read();
    }
    local += factor_sum(p);
  }
  s->completed.fetch_add(iters, std::memory_order_relaxed);
  s->sink.fetch_add(local, std::memory_order_relaxed);
}

// Semaphore benchmark

template <UnlockPolicy P>
struct SemShared {
  explicit SemShared(std::uint64_t permits) : sem(permits), permits(permits) {}
  BasicSemaphore<P> sem;
  std::uint64_t permits;
  std::uint64_t cs_ns = 0;
  std::atomic<std::uint64_t> inflight{0};
  std::atomic<bool> violation{false};
  std::atomic<std::uint64_t> completed{0};
  std::atomic<std::uint64_t> sink{0};
};

template <UnlockPolicy P>
Task sem_task(SemShared<P>* s, std::uint64_t seed, std::size_t index, std::size_t iters) {
  Draws d(seed, index);
  std::uint64_t local = 0;
  for (std::size_t i = 0; i < iters; ++i) {
    std::uint32_t p = d.prime();
    co_await s->sem.acquire();
    if (s->inflight.fetch_add(1) + 1 > s->permits) s->violation = true;
    if (s->cs_ns) busy_wait_ns(s->cs_ns);
    s->inflight.fetch_sub(1);
    co_await s->sem.release();
    local += factor_sum(p);
  }
  s->completed.fetch_add(iters, std::memory_order_relaxed);
  s->sink.fetch_add(local, std::memory_order_relaxed);
}

// Affinity benchmark: R mutex-guarded counters

template <UnlockPolicy P>
struct AffinityShared {
  explicit AffinityShared(std::size_t r) : locks(r), counters(r, 0) {}
  std::vector<BasicMutex<P>> locks;
  std::vector<std::uint64_t> counters;  // each guarded by its lock
  std::uint64_t cs_ns = 0;
  std::atomic<std::uint64_t> sink{0};
};

template <UnlockPolicy P>
Task affinity_task(AffinityShared<P>* s, std::uint64_t seed, std::size_t index, std::size_t iters) {
  Draws d(seed, index);
  std::uint64_t local = 0;
  const std::size_t r = s->locks.size();
  for (std::size_t i = 0; i < iters; ++i) {
    std::size_t k = d.resource(r);
    std::uint32_t p = d.prime();
    co_await s->locks[k].lock();
    ++s->counters[k];
    if (s->cs_ns) busy_wait_ns(s->cs_ns);
    co_await s->locks[k].unlock();
    local += factor_sum(p);
  }
  s->sink.fetch_add(local, std::memory_order_relaxed);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Workloads. Each owns an executor for its duration.

template <UnlockPolicy P>
BenchRecord mutex_workload(BenchConfig c) {
  validate(c);
  BenchRecord rec;
  rec.config = c;
  detail::MutexShared<P> s;
  s.cs_ns = c.cs_ns;
  if (c.cs_ns) SpinCalibration::instance();
  Executor ex(detail::executor_config(c));
  for (std::size_t i = 0; i < c.tasks; ++i) ex.spawn(detail::mutex_task<P>(&s, c.seed, i, c.iters));
  RunReport rep = ex.run();
  detail::finish(rec, rep, s.cs_count);

  std::set<std::uint32_t> expected;
  std::uint64_t expected_sum = 0;
  for (std::size_t i = 0; i < c.tasks; ++i) {
    Draws d(c.seed, i);
    for (std::size_t k = 0; k < c.iters; ++k) {
      std::uint32_t p = d.prime();
      expected.insert(p);
      expected_sum += p;
    }
  }
  if (s.cs_count != static_cast<std::uint64_t>(c.tasks) * c.iters)
    detail::invalidate(rec, "critical-section count mismatch");
  if (s.map.size() != expected.size() ||
      !std::equal(expected.begin(), expected.end(), s.map.begin(),
                  [](std::uint32_t p, const auto& kv) { return kv.first == p && kv.second == p; }))
    detail::invalidate(rec, "map content differs from the drawn primes");
  if (s.sink.load() != expected_sum) detail::invalidate(rec, "parallel section checksum mismatch");
  rec.trace = std::move(rep.trace);
  return rec;
}

template <UnlockPolicy P>
BenchRecord rw_workload(BenchConfig c) {
  validate(c);
  BenchRecord rec;
  rec.config = c;
  detail::RwShared<P> s;
  s.cs_ns = c.cs_ns;
  s.writer_pct = c.writer_pct;
  if (c.cs_ns) SpinCalibration::instance();
  Executor ex(detail::executor_config(c));
  for (std::size_t i = 0; i < c.tasks; ++i) ex.spawn(detail::rw_task<P>(&s, c.seed, i, c.iters));
  RunReport rep = ex.run();
  detail::finish(rec, rep, s.completed.load());

  std::set<std::uint32_t> written;
  std::uint64_t expected_sum = 0;
  for (std::size_t i = 0; i < c.tasks; ++i) {
    Draws d(c.seed, i);
    for (std::size_t k = 0; k < c.iters; ++k) {
      bool w = d.writer(c.writer_pct);
      std::uint32_t p = d.prime();
      if (w) written.insert(p);
      expected_sum += p;
    }
  }
  if (s.violation.load()) detail::invalidate(rec, "reader-writer exclusion violated");
  if (s.map.size() != written.size() ||
      !std::equal(written.begin(), written.end(), s.map.begin(),
                  [](std::uint32_t p, const auto& kv) { return kv.first == p; }))
    detail::invalidate(rec, "map content differs from the written primes");
  if (s.sink.load() != expected_sum) detail::invalidate(rec, "parallel section checksum mismatch");
  rec.trace = std::move(rep.trace);
  return rec;
}

template <UnlockPolicy P>
BenchRecord semaphore_workload(BenchConfig c) {
  validate(c);
  BenchRecord rec;
  rec.config = c;
  detail::SemShared<P> s(c.resources);
  s.cs_ns = c.cs_ns;
  if (c.cs_ns) SpinCalibration::instance();
  Executor ex(detail::executor_config(c));
  for (std::size_t i = 0; i < c.tasks; ++i) ex.spawn(detail::sem_task<P>(&s, c.seed, i, c.iters));
  RunReport rep = ex.run();
  detail::finish(rec, rep, s.completed.load());
  if (s.violation.load()) detail::invalidate(rec, "more holders than permits");
  if (s.sem.permits() != c.resources) detail::invalidate(rec, "permits not restored");
  rec.trace = std::move(rep.trace);
  return rec;
}

template <UnlockPolicy P>
BenchRecord affinity_workload(BenchConfig c) {
  validate(c);
  BenchRecord rec;
  rec.config = c;
  detail::AffinityShared<P> s(c.resources);
  s.cs_ns = c.cs_ns;
  if (c.cs_ns) SpinCalibration::instance();
  Executor ex(detail::executor_config(c));
  for (std::size_t i = 0; i < c.tasks; ++i)
    ex.spawn(detail::affinity_task<P>(&s, c.seed, i, c.iters));
  RunReport rep = ex.run();
  std::uint64_t total = 0;
  for (auto n : s.counters) total += n;
  detail::finish(rec, rep, total);

  std::vector<std::uint64_t> expected(c.resources, 0);
  for (std::size_t i = 0; i < c.tasks; ++i) {
    Draws d(c.seed, i);
    for (std::size_t k = 0; k < c.iters; ++k) {
      ++expected[d.resource(c.resources)];
      d.prime();
    }
  }
  if (expected != s.counters) detail::invalidate(rec, "resource counters differ from the draws");
  rec.trace = std::move(rep.trace);
  return rec;
}

/// Calls f.template operator()<P>() for the runtime policy.
template <typename F>
decltype(auto) with_policy(UnlockPolicy p, F&& f) {
  switch (p) {
    case UnlockPolicy::ces: return f.template operator()<UnlockPolicy::ces>();
    case UnlockPolicy::dispatch: return f.template operator()<UnlockPolicy::dispatch>();
    case UnlockPolicy::inline_resume: break;
  }
  return f.template operator()<UnlockPolicy::inline_resume>();
}

/// One run of the configured benchmark.
inline BenchRecord run_bench(const BenchConfig& c) {
  validate(c);
  return with_policy(c.policy, [&]<UnlockPolicy P>() {
    switch (c.bench) {
      case BenchKind::rwlock: return rw_workload<P>(c);
      case BenchKind::semaphore: return semaphore_workload<P>(c);
      case BenchKind::affinity: return affinity_workload<P>(c);
      case BenchKind::mutex:
      case BenchKind::queuing_delay: break;
    }
    return mutex_workload<P>(c);
  });
}

/// Runs `warmup` discarded runs and `repeat` measured ones and returns the
/// run with the median throughput. Any invalid run invalidates the cell.
inline BenchRecord run_repeated(const BenchConfig& c, std::size_t repeat = 5,
                                std::size_t warmup = 1) {
  validate(c);
  if (repeat < 1) throw usage_error("repeat must be >= 1");
  for (std::size_t i = 0; i < warmup; ++i) {
    BenchRecord w = run_bench(c);
    if (!w.valid) return w;
  }
  std::vector<BenchRecord> runs;
  for (std::size_t i = 0; i < repeat; ++i) runs.push_back(run_bench(c));
  std::vector<double> tps;
  std::string bad;
  for (auto& r : runs) {
    tps.push_back(r.throughput_ops_s);
    if (!r.valid && bad.empty()) bad = r.invalid_reason;
  }
  std::vector<std::size_t> order(runs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return runs[a].throughput_ops_s < runs[b].throughput_ops_s;
  });
  BenchRecord med = std::move(runs[order[(order.size() - 1) / 2]]);
  med.run_throughputs = std::move(tps);
  if (!bad.empty()) detail::invalidate(med, bad);
  return med;
}

struct SweepAxes {
  std::vector<UnlockPolicy> policies;
  std::vector<std::size_t> threads;
  std::vector<std::uint64_t> cs_ns;
};

/// Cross product policy x threads x cs-length over `base`.
inline std::vector<BenchConfig> sweep_configs(const BenchConfig& base, const SweepAxes& axes) {
  std::vector<BenchConfig> out;
  for (auto p : axes.policies)
    for (auto t : axes.threads)
      for (auto cs : axes.cs_ns) {
        BenchConfig c = base;
        c.policy = p;
        c.threads = t;
        c.cs_ns = cs;
        out.push_back(c);
      }
  return out;
}

/// Median-of-`repeat` cells. An invalid cell is recorded and the sweep
/// continues.
inline std::vector<BenchRecord> sweep(const std::vector<BenchConfig>& configs,
                                      std::size_t repeat = 5, std::size_t warmup = 1) {
  std::vector<BenchRecord> out;
  out.reserve(configs.size());
  for (const auto& c : configs) {
    BenchRecord r = run_repeated(c, repeat, warmup);
    r.trace = {};
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

/// Bump when the column set changes.
inline constexpr int kBenchCsvVersion = 1;
inline constexpr std::string_view kBenchCsvHeader =
    "bench,policy,threads,tasks,iters,cs_ns,writer_pct,resources,seed,throughput_ops_s,wall_ns";

inline void write_bench_csv_header(std::ostream& out) { out << kBenchCsvHeader << '\n'; }

inline void write_bench_csv_row(std::ostream& out, const BenchRecord& r) {
  const BenchConfig& c = r.config;
  out << to_string(c.bench) << ',' << to_string(c.policy) << ',' << c.threads << ',' << c.tasks
      << ',' << c.iters << ',' << c.cs_ns << ',';
  if (c.bench == BenchKind::rwlock) out << c.writer_pct;
  char tp[64];
  std::snprintf(tp, sizeof tp, "%.3f", r.throughput_ops_s);
  out << ',' << c.resources << ',' << c.seed << ',' << tp << ',' << r.wall_ns << '\n';
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  write_bench_csv_header(out);
  for (const auto& r : records) write_bench_csv_row(out, r);
}

}  // namespace ces::bench
