#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

using namespace ces;
using namespace testutil;

namespace {

Task noop() { co_return; }

Task yield_n(int n) {
  for (int i = 0; i < n; ++i) co_await yield_now();
}

// Reference interpreter for a body that suspends k times: the only legal
// event sequence is resume (suspend resume)^k complete.
std::vector<TaskEventKind> reference_events(int suspensions) {
  std::vector<TaskEventKind> ev{TaskEventKind::resume};
  for (int i = 0; i < suspensions; ++i) {
    ev.push_back(TaskEventKind::suspend);
    ev.push_back(TaskEventKind::resume);
  }
  ev.push_back(TaskEventKind::complete);
  return ev;
}

}  // namespace

TEST(Spawn, NoopJoinCompletes) {
  Executor ex;
  TaskHandle h = ex.spawn(noop());
  EXPECT_EQ(h.state(), TaskState::created);
  auto rep = ex.run();
  EXPECT_EQ(h.join(), TaskState::completed);
  EXPECT_TRUE(h.finished());
  EXPECT_FALSE(h.failed());
  EXPECT_EQ(rep.completed, 1u);
}

TEST(Spawn, FiveThousandDistinctIdsAllComplete) {
  Executor ex({4, 1});
  std::vector<TaskHandle> hs;
  std::set<TaskId> ids;
  for (int i = 0; i < 5000; ++i) {
    hs.push_back(ex.spawn(noop()));
    ids.insert(hs.back().id());
  }
  EXPECT_EQ(ids.size(), 5000u);
  auto rep = ex.run();
  EXPECT_EQ(rep.completed, 5000u);
  for (auto& h : hs) EXPECT_EQ(h.state(), TaskState::completed);
}

TEST(Spawn, ThreeSuspensionsMatchReferenceInterpreter) {
  Executor ex(traced(2));
  TaskHandle h = ex.spawn(yield_n(3));
  auto rep = ex.run();
  std::vector<TaskEventKind> seen;
  for (auto& e : task_events_of(rep.trace, h.id())) seen.push_back(e.kind);
  EXPECT_EQ(seen, reference_events(3));
}

TEST(Spawn, AfterShutdownIsRejected) {
  Executor ex;
  ex.spawn(noop());
  ex.run();
  EXPECT_THROW(ex.spawn(noop()), executor_shut_down);
}

TEST(Spawn, ExceptionMarksOutcomeFailed) {
  Executor ex;
  auto thrower = []() -> Task {
    throw std::runtime_error("boom");
    co_return;
  };
  TaskHandle h = ex.spawn(thrower());
  auto rep = ex.run();
  EXPECT_TRUE(h.failed());
  EXPECT_THROW(h.rethrow_if_failed(), std::runtime_error);
  ASSERT_EQ(rep.outcomes.size(), 1u);
  EXPECT_TRUE(rep.outcomes[0].failed);
  EXPECT_EQ(rep.failed, 1u);
}

TEST(Outcome, EmittedExactlyOncePerTask) {
  Executor ex({3, 9});
  std::multiset<TaskId> spawned;
  for (int i = 0; i < 300; ++i) spawned.insert(ex.spawn(yield_n(i % 4)).id());
  auto rep = ex.run();
  std::multiset<TaskId> seen;
  for (auto& o : rep.outcomes) {
    seen.insert(o.task);
    EXPECT_FALSE(o.failed);
    EXPECT_GT(o.completed_ns, 0u);
  }
  EXPECT_EQ(seen, spawned);
}

TEST(YieldNow, SingleTaskResumesNext) {
  Executor ex(traced(1));
  TaskHandle h = ex.spawn(yield_n(1));
  auto rep = ex.run();
  auto all = rep.trace.merged_task_events();
  ASSERT_EQ(all.size(), 4u);
  for (auto& e : all) EXPECT_EQ(e.task, h.id());
}

TEST(YieldNow, OtherTaskRunsBeforeYielderResumes) {
  Executor ex;
  std::vector<std::string> order;
  auto a = [&]() -> Task {
    order.push_back("A-pre");
    co_await yield_now();
    order.push_back("A-post");
  };
  auto b = [&]() -> Task {
    order.push_back("B");
    co_return;
  };
  ex.spawn(a());
  ex.spawn(b());
  ex.run();
  EXPECT_EQ(order, (std::vector<std::string>{"A-pre", "B", "A-post"}));
}

TEST(YieldNow, ThousandYieldsComplete) {
  Executor ex;
  TaskHandle h = ex.spawn(yield_n(1000));
  ex.run();
  EXPECT_EQ(h.state(), TaskState::completed);
}

TEST(YieldNow, OutsideTaskIsUsageError) {
  auto aw = yield_now();
  EXPECT_THROW(aw.await_suspend(std::noop_coroutine()), usage_error);
  EXPECT_THROW(this_task::id(), usage_error);
  EXPECT_EQ(this_worker::id(), -1);
}

// Property: every task's events follow (resume suspend)* resume complete and
// a task changes worker only between suspend and resume.
TEST(TaskProperties, LinearResumeDisciplineAndMigrationSafety) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Executor ex(traced(4, seed));
    std::vector<TaskId> ids;
    for (int i = 0; i < 200; ++i) ids.push_back(ex.spawn(yield_n(static_cast<int>(seed + i) % 7)).id());
    auto rep = ex.run();
    std::map<TaskId, std::vector<TaskEvent>> per;
    for (auto& e : rep.trace.merged_task_events()) per[e.task].push_back(e);
    for (TaskId id : ids) {
      auto& ev = per[id];
      ASSERT_GE(ev.size(), 2u);
      for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
        bool expect_resume = i % 2 == 0;
        if (expect_resume) {
          EXPECT_EQ(ev[i].kind, TaskEventKind::resume);
          // Running segment: the following suspend/complete is on the same worker.
          EXPECT_EQ(ev[i + 1].worker, ev[i].worker);
        } else {
          EXPECT_EQ(ev[i].kind, TaskEventKind::suspend);
        }
      }
      EXPECT_EQ(ev.back().kind, TaskEventKind::complete);
    }
  }
}

TEST(Continuation, DoubleScheduleResumesOnce) {
  Executor ex(traced(2, 3));
  std::atomic<TaskPromise*> parked{nullptr};
  std::atomic<int> rejected{0};
  std::atomic<int> resumed{0};
  auto sleeper = [&]() -> Task {
    co_await suspend_with([&](Continuation c) { parked.store(c.promise()); });
    resumed.fetch_add(1);
  };
  auto waker = [&]() -> Task {
    TaskPromise* p;
    while ((p = parked.load()) == nullptr) co_await yield_now();
    ex.schedule(Continuation{p});
    try {
      ex.schedule(Continuation{p});
    } catch (const state_error&) {
      rejected.fetch_add(1);
    }
  };
  TaskHandle s = ex.spawn(sleeper());
  ex.spawn(waker());
  auto rep = ex.run();
  EXPECT_EQ(resumed.load(), 1);
  EXPECT_EQ(count_task(rep.trace, s.id(), TaskEventKind::resume), 2u);
  // The second schedule is either refused up front or its stale entry is
  // caught by the atomic claim when a worker dequeues it.
  EXPECT_EQ(rejected.load() + static_cast<int>(rep.double_resume_errors), 1);
}

TEST(Continuation, ScheduleAfterCompletionIsStateError) {
  Executor ex;
  TaskHandle h = ex.spawn(noop());
  ex.run();
  EXPECT_THROW(ex.schedule(h.continuation()), state_error);
}
