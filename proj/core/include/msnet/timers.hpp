#pragma once

#include "msnet/sched.hpp"
#include "msnet/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <vector>

namespace msnet {

/// Deadline queue for blocked tasks: each task has at most one pending
/// deadline, and firing it wakes the task through the pool. Serviced by the
/// virtual-clock task or, in wall-clock mode, by a timer thread.
class TimerService {
  public:
    explicit TimerService(sched::WorkerPool& pool) : pool_(pool) {}

    /// Replaces any earlier deadline of the same task.
    void arm(sched::TaskId task, Nanos deadline);
    void cancel(sched::TaskId task);

    /// Wakes every task whose deadline is <= now; returns how many.
    std::size_t fire_due(Nanos now);
    std::optional<Nanos> next_deadline() const;
    std::size_t pending() const;

    /// Called (outside the lock) whenever an arm makes the earliest deadline
    /// earlier; used to nudge a sleeping timer thread.
    void set_on_earlier(std::function<void()> hook);

  private:
    struct Entry {
        Nanos deadline;
        std::uint64_t seq;
        sched::TaskId task;
    };

    void prune_locked() const;

    sched::WorkerPool& pool_;
    mutable std::mutex mu_;
    mutable std::vector<Entry> heap_;
    std::map<sched::TaskId, std::uint64_t> current_;
    std::uint64_t next_seq_ = 0;
    std::function<void()> on_earlier_;
};

}  // namespace msnet
