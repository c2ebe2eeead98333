#pragma once

#include "msnet/error.hpp"
#include "msnet/frame.hpp"

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <utility>
#include <vector>

namespace msnet {

inline constexpr std::size_t kDefaultRingCapacity = 4096;

/// Consumer-side state shared with producers: the activity word ("threads",
/// read-only for producers) and the doorbell used to wake an idle consumer.
/// One signal may be shared by every channel a single consumer loop drains.
class ConsumerSignal {
  public:
    ConsumerSignal() = default;
    ConsumerSignal(const ConsumerSignal&) = delete;
    ConsumerSignal& operator=(const ConsumerSignal&) = delete;

    /// Consumer: about to drain.
    void enter() noexcept { active_.fetch_add(1, std::memory_order_seq_cst); }
    /// Consumer: going idle. Must be followed by a re-check of every drained
    /// channel before blocking.
    void leave() noexcept;
    int active() const noexcept { return active_.load(std::memory_order_seq_cst); }

    /// Producer: call after publishing. Rings the doorbell iff the consumer is
    /// idle and returns whether it rang.
    bool notify_if_idle();
    void ring();

    std::uint64_t doorbell_count() const noexcept { return rings_.load(std::memory_order_acquire); }

    /// Installs the callback run on every ring, e.g. waking a scheduler task.
    /// Safe to call while producers are ringing.
    void set_waker(std::function<void()> waker);

    /// Blocks the calling OS thread until doorbell_count() differs from token.
    void wait(std::uint64_t token) const noexcept { rings_.wait(token, std::memory_order_acquire); }

  private:
    alignas(64) std::atomic<int> active_{0};
    alignas(64) std::atomic<std::uint64_t> rings_{0};
    std::atomic<const std::function<void()>*> waker_{nullptr};
    std::mutex waker_mu_;
    // Superseded wakers stay alive until the signal dies so a concurrent ring()
    // never calls through a dangling pointer.
    std::vector<std::unique_ptr<const std::function<void()>>> wakers_;
};

/// Bounded single-producer/single-consumer ring. Indices are unbounded
/// counters reduced modulo the power-of-two capacity.
template <class T>
class SpscRing {
  public:
    explicit SpscRing(std::size_t capacity)
        : mask_(capacity - 1)
        , slots_(check_capacity(capacity))
    {
    }

    std::size_t capacity() const noexcept { return mask_ + 1; }

    /// Moves from value only on success.
    bool try_push(T&& value)
    {
        const auto tail = tail_.load(std::memory_order_relaxed);
        if (tail - head_cache_ > mask_) {
            head_cache_ = head_.load(std::memory_order_acquire);
            if (tail - head_cache_ > mask_)
                return false;
        }
        slots_[tail & mask_] = std::move(value);
        tail_.store(tail + 1, std::memory_order_release);
        return true;
    }

    std::optional<T> try_pop()
    {
        const auto head = head_.load(std::memory_order_relaxed);
        if (head == tail_cache_) {
            tail_cache_ = tail_.load(std::memory_order_acquire);
            if (head == tail_cache_)
                return std::nullopt;
        }
        std::optional<T> out(std::move(slots_[head & mask_]));
        slots_[head & mask_] = T{};
        head_.store(head + 1, std::memory_order_release);
        return out;
    }

    bool empty() const noexcept
    {
        return head_.load(std::memory_order_acquire) == tail_.load(std::memory_order_acquire);
    }

    std::size_t size() const noexcept
    {
        return static_cast<std::size_t>(tail_.load(std::memory_order_acquire) -
                                        head_.load(std::memory_order_acquire));
    }

    std::uint64_t pushed() const noexcept { return tail_.load(std::memory_order_acquire); }
    std::uint64_t popped() const noexcept { return head_.load(std::memory_order_acquire); }

  private:
    static std::size_t check_capacity(std::size_t capacity)
    {
        if (capacity < 2 || (capacity & (capacity - 1)) != 0)
            throw Error(Errc::BadCapacity,
                        "ring capacity " + std::to_string(capacity) + " is not a power of two >= 2");
        return capacity;
    }

    alignas(64) std::atomic<std::uint64_t> head_{0};
    std::uint64_t tail_cache_ = 0;  // consumer-owned
    alignas(64) std::atomic<std::uint64_t> tail_{0};
    std::uint64_t head_cache_ = 0;  // producer-owned
    alignas(64) const std::uint64_t mask_;
    std::vector<T> slots_;
};

enum class PushResult { Ok, Full };

template <class T>
struct Channel {
    Channel(std::size_t capacity, std::shared_ptr<ConsumerSignal> sig)
        : ring(capacity)
        , signal(std::move(sig))
    {
    }

    SpscRing<T> ring;
    std::shared_ptr<ConsumerSignal> signal;
};

template <class T>
class Producer {
  public:
    Producer() = default;
    explicit Producer(std::shared_ptr<Channel<T>> ch) : ch_(std::move(ch)) {}

    /// On Ok the value is enqueued and, if the consumer was idle, its doorbell
    /// rung once. On Full value is left untouched.
    PushResult try_push(T&& value)
    {
        if (!ch_->ring.try_push(std::move(value)))
            return PushResult::Full;
        ch_->signal->notify_if_idle();
        return PushResult::Ok;
    }

    explicit operator bool() const noexcept { return static_cast<bool>(ch_); }
    std::size_t capacity() const noexcept { return ch_->ring.capacity(); }
    std::size_t size() const noexcept { return ch_->ring.size(); }
    ConsumerSignal& signal() const noexcept { return *ch_->signal; }

  private:
    std::shared_ptr<Channel<T>> ch_;
};

template <class T>
class Consumer {
  public:
    Consumer() = default;
    explicit Consumer(std::shared_ptr<Channel<T>> ch) : ch_(std::move(ch)) {}

    std::optional<T> try_pop() { return ch_->ring.try_pop(); }
    bool empty() const noexcept { return ch_->ring.empty(); }
    std::size_t size() const noexcept { return ch_->ring.size(); }
    std::size_t capacity() const noexcept { return ch_->ring.capacity(); }

    /// Blocks the calling thread until a doorbell ring. The caller must have
    /// left the activity section first (signal().leave()). Returns at once if
    /// the channel is non-empty; spurious returns are possible.
    void wait()
    {
        auto& sig = *ch_->signal;
        const auto token = sig.doorbell_count();
        std::atomic_thread_fence(std::memory_order_seq_cst);
        if (!ch_->ring.empty())
            return;
        sig.wait(token);
    }

    explicit operator bool() const noexcept { return static_cast<bool>(ch_); }
    ConsumerSignal& signal() const noexcept { return *ch_->signal; }
    std::uint64_t doorbell_count() const noexcept { return ch_->signal->doorbell_count(); }

  private:
    std::shared_ptr<Channel<T>> ch_;
};

/// Throws BadCapacity unless capacity is a power of two >= 2. Channels that
/// feed the same consumer loop share one signal.
template <class T>
std::pair<Producer<T>, Consumer<T>> create_channel(std::size_t capacity,
                                                   std::shared_ptr<ConsumerSignal> signal = {})
{
    if (!signal)
        signal = std::make_shared<ConsumerSignal>();
    auto ch = std::make_shared<Channel<T>>(capacity, std::move(signal));
    return {Producer<T>(ch), Consumer<T>(ch)};
}

using FrameProducer = Producer<Frame>;
using FrameConsumer = Consumer<Frame>;

}  // namespace msnet
