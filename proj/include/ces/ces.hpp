#pragma once

#include "ces/clock.hpp"
#include "ces/condition_variable.hpp"
#include "ces/errors.hpp"
#include "ces/executor.hpp"
#include "ces/metrics.hpp"
#include "ces/mutex.hpp"
#include "ces/policy.hpp"
#include "ces/rw_mutex.hpp"
#include "ces/semaphore.hpp"
#include "ces/task.hpp"
#include "ces/trace.hpp"
