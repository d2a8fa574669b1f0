#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "ces/detail/waiter_queue.hpp"
#include "ces/executor.hpp"

#ifndef CES_DEBUG_OWNERSHIP
#ifdef NDEBUG
#define CES_DEBUG_OWNERSHIP 0
#else
#define CES_DEBUG_OWNERSHIP 1
#endif
#endif

namespace ces {

/// What a releasing task does with the waiter(s) it grants ownership to.
enum class UnlockPolicy : std::uint8_t {
  ces,            // suspend the releaser to the injector, run the waiter here
  dispatch,       // push the waiter to the injector, releaser continues
  inline_resume,  // run the waiter as a nested call, releaser continues after
};

inline constexpr std::string_view to_string(UnlockPolicy p) noexcept {
  switch (p) {
    case UnlockPolicy::ces: return "ces";
    case UnlockPolicy::dispatch: return "dispatch";
    case UnlockPolicy::inline_resume: return "inline";
  }
  return "?";
}

inline std::optional<UnlockPolicy> parse_policy(std::string_view s) noexcept {
  if (s == "ces") return UnlockPolicy::ces;
  if (s == "dispatch") return UnlockPolicy::dispatch;
  if (s == "inline") return UnlockPolicy::inline_resume;
  return std::nullopt;
}

namespace detail {

/// Waiters that have been granted ownership under a primitive's guard.
/// `rest` is a chain through WaiterNode::next; each node lives in a
/// suspended frame, so the successor must be read before a node's task is
/// woken.
struct Grant {
  TaskPromise* first = nullptr;
  WaiterNode* rest = nullptr;
  WaiterNode* rest_tail = nullptr;

  explicit operator bool() const noexcept { return first != nullptr; }

  void add(WaiterNode* n) noexcept {
    if (!first) {
      first = n->task;
      return;
    }
    n->next = nullptr;
    if (rest_tail) rest_tail->next = n;
    else rest = n;
    rest_tail = n;
  }
};

/// Applies the non-suspending part of a release. Returns true when the
/// caller must still switch_to(grant.first) from its await_suspend.
template <UnlockPolicy Policy>
bool wake_granted(std::uint64_t primitive, TaskPromise* self, const Grant& g) {
  Executor* ex = detail::tls_worker->executor;
  TaskId self_id = self->id();
  if constexpr (Policy == UnlockPolicy::inline_resume) {
    record_sync(primitive, SyncEventKind::handoff, g.first->id(), self_id);
    ex->resume_inline(Continuation{g.first});
    for (WaiterNode* n = g.rest; n != nullptr;) {
      WaiterNode* following = n->next;
      TaskPromise* t = n->task;
      record_sync(primitive, SyncEventKind::handoff, t->id(), self_id);
      ex->resume_inline(Continuation{t});
      n = following;
    }
    return false;
  } else {
    for (WaiterNode* n = g.rest; n != nullptr;) {
      WaiterNode* following = n->next;
      TaskPromise* t = n->task;
      record_sync(primitive, SyncEventKind::dispatch, t->id(), self_id);
      ex->schedule(Continuation{t});
      n = following;
    }
    if constexpr (Policy == UnlockPolicy::dispatch) {
      record_sync(primitive, SyncEventKind::dispatch, g.first->id(), self_id);
      ex->schedule(Continuation{g.first});
      return false;
    } else {
      return true;
    }
  }
}

/// Suspending half of a CES release: the releaser goes to the injector and
/// `next` runs on this worker immediately.
inline void ces_switch(std::uint64_t primitive, TaskPromise* next) {
  TaskPromise* self = tls_task;
  record_sync(primitive, SyncEventKind::handoff, next->id(), self->id());
  tls_worker->executor->switch_to(Continuation{self}, Continuation{next});
}

}  // namespace detail
}  // namespace ces
