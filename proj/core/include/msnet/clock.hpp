#pragma once

#include "msnet/types.hpp"

#include <atomic>
#include <chrono>

namespace msnet {

/// Time source for medium latency, retransmission timers and metrics.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual Nanos now() const noexcept = 0;
    virtual bool is_virtual() const noexcept = 0;
};

/// Advanced explicitly by the scheduler when every task is idle; makes
/// desk-scale runs deterministic.
class VirtualClock final : public Clock {
  public:
    Nanos now() const noexcept override { return Nanos(t_.load(std::memory_order_acquire)); }
    bool is_virtual() const noexcept override { return true; }

    /// Monotone: earlier targets are ignored.
    void advance_to(Nanos t) noexcept
    {
        auto cur = t_.load(std::memory_order_relaxed);
        while (cur < t.count() &&
               !t_.compare_exchange_weak(cur, t.count(), std::memory_order_acq_rel)) {
        }
    }

  private:
    std::atomic<Nanos::rep> t_{0};
};

class WallClock final : public Clock {
  public:
    WallClock() : origin_(std::chrono::steady_clock::now()) {}

    Nanos now() const noexcept override
    {
        return std::chrono::duration_cast<Nanos>(std::chrono::steady_clock::now() - origin_);
    }
    bool is_virtual() const noexcept override { return false; }

  private:
    std::chrono::steady_clock::time_point origin_;
};

}  // namespace msnet
