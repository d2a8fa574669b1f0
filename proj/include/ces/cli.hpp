#pragma once

#include <unistd.h>

#include <CLI11.hpp>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ces/bench.hpp"
#include "ces/metrics.hpp"

namespace ces::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // benchmark invalid or I/O failure
inline constexpr int kExitUsage = 2;

struct CliInvocation {
  bench::BenchConfig config;  // bench, tasks, iters, resources, seed
  std::vector<UnlockPolicy> policies{UnlockPolicy::ces};
  std::vector<std::size_t> threads{8};
  std::vector<std::uint64_t> cs_ns{0};
  std::vector<double> writer_pcts{50.0};
  std::string out = "results.csv";
  std::string trace_out;
  std::size_t repeat = 5;
  std::size_t warmup = 1;
  int verbosity = 0;
  bool list = false;

  /// One config per cell of policy x threads x cs-ns (x writer-pct).
  std::vector<bench::BenchConfig> cells() const {
    std::vector<bench::BenchConfig> out_cells;
    for (double w : writer_pcts) {
      bench::BenchConfig base = config;
      base.writer_pct = w;
      base.trace = !trace_out.empty();
      for (auto& c : bench::sweep_configs(base, {policies, threads, cs_ns})) out_cells.push_back(c);
    }
    return out_cells;
  }
};

struct ParseOutcome {
  std::optional<CliInvocation> invocation;
  int exit_code = kExitOk;
  std::string message;
};

/// Parses flags; CES_THREADS and CES_SEED fill in when the flag is absent.
inline ParseOutcome parse_args(int argc, const char* const* argv) {
  CLI::App app{"Task-aware lock benchmarks", "ces_bench"};
  std::string bench_name = "mutex";
  std::vector<std::string> policy_names{"ces"};
  std::vector<long long> threads{8};
  long long tasks = 5000, iters = 1000, resources = 4, repeat = 5, warmup = 1;
  std::vector<long long> cs_ns{0};
  std::vector<double> writer_pcts{50.0};
  std::uint64_t seed = 1;
  CliInvocation inv;

  app.add_option("--bench", bench_name, "mutex|rwlock|semaphore|affinity|queuing-delay");
  app.add_option("--policy", policy_names, "ces|dispatch|inline (comma list sweeps)")
      ->delimiter(',');
  app.add_option("--threads", threads, "worker threads (comma list sweeps)")
      ->delimiter(',')
      ->envname("CES_THREADS");
  app.add_option("--tasks", tasks, "concurrent tasks");
  app.add_option("--iters", iters, "loop iterations per task");
  app.add_option("--cs-ns", cs_ns, "busy-wait inside the critical section (comma list sweeps)")
      ->delimiter(',');
  auto* wp = app.add_option("--writer-pct", writer_pcts, "rwlock writer share: 50,25,12.5,6.25")
                 ->delimiter(',');
  app.add_option("--resources", resources, "affinity: mutex count; semaphore: permits");
  app.add_option("--seed", seed, "workload seed")->envname("CES_SEED");
  app.add_option("--out", inv.out, "bench CSV path");
  app.add_option("--trace-out", inv.trace_out, "task trace CSV of the last cell");
  app.add_option("--repeat", repeat, "measured runs per cell; the median is reported");
  app.add_option("--warmup", warmup, "discarded runs per cell");
  app.add_flag("--list", inv.list, "list benches and policies");
  app.add_flag("-v,--verbose", inv.verbosity, "print every run");

  ParseOutcome res;
  auto usage = [&](std::string msg) {
    res.exit_code = kExitUsage;
    res.message = std::move(msg);
    return res;
  };
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    res.exit_code = kExitOk;
    res.message = app.help();
    return res;
  } catch (const CLI::ParseError& e) {
    return usage(e.what());
  }
  if (inv.list) {
    res.invocation = inv;
    return res;
  }

  auto b = bench::parse_bench(bench_name);
  if (!b)
    return usage("unknown bench '" + bench_name +
                 "'; valid benches: mutex, rwlock, semaphore, affinity, queuing-delay");
  inv.config.bench = *b;

  inv.policies.clear();
  for (auto& n : policy_names) {
    auto p = parse_policy(n);
    if (!p) return usage("unknown policy '" + n + "'; valid policies: ces, dispatch, inline");
    inv.policies.push_back(*p);
  }
  inv.threads.clear();
  for (auto t : threads) {
    if (t < 1) return usage("--threads must be >= 1");
    inv.threads.push_back(static_cast<std::size_t>(t));
  }
  inv.cs_ns.clear();
  for (auto c : cs_ns) {
    if (c < 0) return usage("--cs-ns must be >= 0");
    inv.cs_ns.push_back(static_cast<std::uint64_t>(c));
  }
  if (tasks < 1) return usage("--tasks must be >= 1");
  if (iters < 1) return usage("--iters must be >= 1");
  if (resources < 1) return usage("--resources must be >= 1");
  if (repeat < 1) return usage("--repeat must be >= 1");
  if (warmup < 0) return usage("--warmup must be >= 0");
  inv.config.tasks = static_cast<std::size_t>(tasks);
  inv.config.iters = static_cast<std::size_t>(iters);
  inv.config.resources = static_cast<std::size_t>(resources);
  inv.config.seed = seed;
  inv.repeat = static_cast<std::size_t>(repeat);
  inv.warmup = static_cast<std::size_t>(warmup);

  if (wp->count() > 0 && inv.config.bench != bench::BenchKind::rwlock)
    return usage("--writer-pct only applies to --bench rwlock");
  inv.writer_pcts = inv.config.bench == bench::BenchKind::rwlock ? writer_pcts
                                                                 : std::vector<double>{50.0};

  bool traced = inv.config.bench == bench::BenchKind::affinity ||
                inv.config.bench == bench::BenchKind::queuing_delay;
  if (traced && inv.policies.size() * inv.threads.size() * inv.cs_ns.size() != 1)
    return usage("--bench " + bench_name + " takes a single policy, thread count and CS length");
  try {
    for (auto& c : inv.cells()) bench::validate(c);
  } catch (const usage_error& e) {
    return usage(e.what());
  }
  res.invocation = std::move(inv);
  return res;
}

/// Writes through a temporary file in the target directory and renames it
/// into place. Returns false (and leaves no partial file) on failure.
inline bool write_atomically(const std::string& path, const std::function<void(std::ostream&)>& fn,
                             std::string& error) {
  std::string tmp = path + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) {
      error = "cannot open " + tmp + " for writing";
      return false;
    }
    fn(f);
    f.flush();
    if (!f) {
      error = "write to " + tmp + " failed";
      std::filesystem::remove(tmp);
      return false;
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    error = "cannot rename " + tmp + " to " + path + ": " + ec.message();
    std::filesystem::remove(tmp, ec);
    return false;
  }
  return true;
}

inline std::string sibling_path(const std::string& out, const char* name) {
  return (std::filesystem::path(out).parent_path() / name).string();
}

inline int run_and_report(const CliInvocation& inv, std::ostream& out, std::ostream& err) {
  if (inv.list) {
    out << "benches: mutex rwlock semaphore affinity queuing-delay\n"
        << "policies: ces dispatch inline\n";
    return kExitOk;
  }
  std::vector<bench::BenchRecord> records;
  bool all_valid = true;
  for (const auto& cell : inv.cells()) {
    bench::BenchRecord r;
    try {
      r = bench::run_repeated(cell, inv.repeat, inv.warmup);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitInvalid;
    }
    const auto& c = r.config;
    out << bench::to_string(c.bench) << " policy=" << to_string(c.policy)
        << " threads=" << c.threads << " tasks=" << c.tasks << " iters=" << c.iters
        << " cs_ns=" << c.cs_ns;
    if (c.bench == bench::BenchKind::rwlock) out << " writer_pct=" << c.writer_pct;
    out << " throughput=" << static_cast<std::uint64_t>(r.throughput_ops_s) << " ops/s"
        << " (median of " << inv.repeat << ")" << (r.valid ? "" : " INVALID: " + r.invalid_reason)
        << '\n';
    if (inv.verbosity > 0) {
      out << "  runs:";
      for (double t : r.run_throughputs) out << ' ' << static_cast<std::uint64_t>(t);
      out << "\n  tasks per worker:";
      for (auto n : r.per_worker_tasks) out << ' ' << n;
      out << '\n';
    }
    all_valid = all_valid && r.valid;
    records.push_back(std::move(r));
  }

  std::string error;
  bool io_ok = write_atomically(
      inv.out, [&](std::ostream& f) { bench::write_bench_csv(f, records); }, error);

  const bench::BenchRecord& last = records.back();
  try {
    if (io_ok && last.config.bench == bench::BenchKind::affinity) {
      auto at = build_affinity_trace(last.trace);
      auto rep = validate_affinity(at);
      out << "  contended handoffs=" << rep.contended
          << " same-worker fraction=" << rep.same_worker_fraction
          << " worker changes=" << rep.worker_changes << '\n';
      io_ok = write_atomically(
          sibling_path(inv.out, "affinity.csv"), [&](std::ostream& f) { write_affinity_csv(f, at); },
          error);
    }
    if (io_ok && last.config.bench == bench::BenchKind::queuing_delay) {
      auto qd = measure_queuing_delay(last.trace);
      auto cs = cs_length_stats(last.trace);
      out << "  samples=" << qd.samples.size() << " median t_queue=" << qd.t_queue.median
          << " ns p95=" << qd.t_queue.p95 << " ns max=" << qd.t_queue.max
          << " ns; median t_sync=" << qd.t_sync.median << " ns; median CS=" << cs.median
          << " ns\n";
      io_ok = write_atomically(
          sibling_path(inv.out, "delay.csv"), [&](std::ostream& f) { write_delay_csv(f, qd); },
          error);
    }
  } catch (const trace_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  if (io_ok && !inv.trace_out.empty())
    io_ok = write_atomically(
        inv.trace_out, [&](std::ostream& f) { last.trace.write_task_csv(f); }, error);
  if (!io_ok) {
    err << "error: " << error << '\n';
    return kExitInvalid;
  }
  return all_valid ? kExitOk : kExitInvalid;
}

}  // namespace ces::cli
