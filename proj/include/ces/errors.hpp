#pragma once

#include <stdexcept>
#include <string>

namespace ces {

/// Contract violation by the caller (reentrant lock, unlock without holding,
/// verbs called outside of a task, double run).
class usage_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A continuation was not in the state an operation requires.
class state_error : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Work was submitted to an executor that has already shut down.
class executor_shut_down : public std::runtime_error {
 public:
  executor_shut_down() : std::runtime_error("executor has shut down") {}
};

/// A recorded trace lacks events an analysis needs.
class trace_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ces
