#pragma once

#include "msnet/error.hpp"

#include <array>
#include <atomic>
#include <compare>
#include <coroutine>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

/// Non-preemptive M:N scheduler. Tasks are C++20 coroutines whose only
/// scheduling points are `co_await yield_now()` and `co_await block()`; a task
/// that never reaches one keeps its worker for as long as it runs.
namespace msnet::sched {

struct TaskId {
    std::uint64_t value = 0;

    constexpr explicit operator bool() const noexcept { return value != 0; }
    friend constexpr auto operator<=>(TaskId, TaskId) = default;
};

enum class TaskState : std::uint8_t { Ready = 0, Running = 1, Blocked = 2, Done = 3 };

namespace detail {
struct Tcb;
}

class Task {
  public:
    struct promise_type {
        detail::Tcb* tcb = nullptr;
        std::exception_ptr error;

        Task get_return_object() noexcept
        {
            return Task(std::coroutine_handle<promise_type>::from_promise(*this));
        }
        std::suspend_always initial_suspend() noexcept { return {}; }
        std::suspend_always final_suspend() noexcept { return {}; }
        void return_void() noexcept {}
        void unhandled_exception() noexcept { error = std::current_exception(); }
    };
    using Handle = std::coroutine_handle<promise_type>;

    Task() = default;
    Task(Task&& other) noexcept : h_(std::exchange(other.h_, {})) {}
    Task& operator=(Task&& other) noexcept
    {
        if (this != &other) {
            if (h_)
                h_.destroy();
            h_ = std::exchange(other.h_, {});
        }
        return *this;
    }
    Task(const Task&) = delete;
    Task& operator=(const Task&) = delete;
    ~Task()
    {
        if (h_)
            h_.destroy();
    }

    Handle release() noexcept { return std::exchange(h_, {}); }

  private:
    explicit Task(Handle h) : h_(h) {}
    Handle h_;
};

struct YieldAwaiter {
    bool await_ready() const noexcept { return false; }
    void await_suspend(Task::Handle h) const noexcept;
    void await_resume() const noexcept {}
};

struct BlockAwaiter {
    bool await_ready() const noexcept { return false; }
    /// Returns false (no suspension) when a wake is already pending.
    bool await_suspend(Task::Handle h) const noexcept;
    void await_resume() const noexcept {}
};

/// Requeues the caller at the back of the global queue.
inline YieldAwaiter yield_now() noexcept { return {}; }
/// Parks the caller until wake(); a wake issued earlier is remembered and makes
/// the next block() return immediately.
inline BlockAwaiter block() noexcept { return {}; }

class WorkerPool;

/// The task running on the calling worker thread, or a null id.
TaskId current_task() noexcept;
WorkerPool* current_pool() noexcept;

namespace detail {

/// Bounded MPMC queue (sequence-numbered cells). Operations never wait on a
/// peer: a slot still being written by a suspended producer reads as empty.
template <class T>
class MpmcQueue {
  public:
    explicit MpmcQueue(std::size_t capacity)
        : mask_(capacity - 1)
        , cells_(std::make_unique<Cell[]>(capacity))
    {
        for (std::size_t i = 0; i < capacity; ++i)
            cells_[i].seq.store(i, std::memory_order_relaxed);
    }

    bool try_push(T value) noexcept
    {
        auto pos = enq_.load(std::memory_order_relaxed);
        Cell* cell;
        for (;;) {
            cell = &cells_[pos & mask_];
            const auto seq = cell->seq.load(std::memory_order_acquire);
            const auto dif = static_cast<std::intptr_t>(seq) - static_cast<std::intptr_t>(pos);
            if (dif == 0) {
                if (enq_.compare_exchange_weak(pos, pos + 1, std::memory_order_relaxed))
                    break;
            } else if (dif < 0) {
                return false;
            } else {
                pos = enq_.load(std::memory_order_relaxed);
            }
        }
        cell->value = value;
        cell->seq.store(pos + 1, std::memory_order_release);
        return true;
    }

    bool try_pop(T& out) noexcept
    {
        auto pos = deq_.load(std::memory_order_relaxed);
        Cell* cell;
        for (;;) {
            cell = &cells_[pos & mask_];
            const auto seq = cell->seq.load(std::memory_order_acquire);
            const auto dif =
                static_cast<std::intptr_t>(seq) - static_cast<std::intptr_t>(pos + 1);
            if (dif == 0) {
                if (deq_.compare_exchange_weak(pos, pos + 1, std::memory_order_relaxed))
                    break;
            } else if (dif < 0) {
                return false;
            } else {
                pos = deq_.load(std::memory_order_relaxed);
            }
        }
        out = cell->value;
        cell->seq.store(pos + mask_ + 1, std::memory_order_release);
        return true;
    }

    std::size_t size() const noexcept
    {
        const auto e = enq_.load(std::memory_order_acquire);
        const auto d = deq_.load(std::memory_order_acquire);
        return e > d ? e - d : 0;
    }

  private:
    struct Cell {
        std::atomic<std::size_t> seq;
        T value;
    };

    const std::size_t mask_;
    std::unique_ptr<Cell[]> cells_;
    alignas(64) std::atomic<std::size_t> enq_{0};
    alignas(64) std::atomic<std::size_t> deq_{0};
};

/// Per-worker run queue: only the owner pushes; the owner and thieves take
/// from the head with a CAS, so pops are FIFO.
class LocalQueue {
  public:
    static constexpr std::size_t kCapacity = 256;

    LocalQueue()
    {
        for (auto& s : slots_)
            s.store(nullptr, std::memory_order_relaxed);
    }

    bool push(Tcb* t) noexcept
    {
        const auto tail = tail_.load(std::memory_order_relaxed);
        if (tail - head_.load(std::memory_order_acquire) >= kCapacity)
            return false;
        slots_[tail % kCapacity].store(t, std::memory_order_relaxed);
        tail_.store(tail + 1, std::memory_order_release);
        return true;
    }

    Tcb* pop() noexcept
    {
        for (;;) {
            auto head = head_.load(std::memory_order_acquire);
            const auto tail = tail_.load(std::memory_order_acquire);
            if (head == tail)
                return nullptr;
            Tcb* t = slots_[head % kCapacity].load(std::memory_order_relaxed);
            if (head_.compare_exchange_weak(head, head + 1, std::memory_order_acq_rel))
                return t;
        }
    }

    /// Moves half of victim's queue (rounded up) into this queue and returns
    /// one of the stolen tasks to run. Caller must be this queue's owner.
    Tcb* steal_half(LocalQueue& victim) noexcept
    {
        std::array<Tcb*, kCapacity / 2> grabbed{};
        for (;;) {
            auto head = victim.head_.load(std::memory_order_acquire);
            const auto tail = victim.tail_.load(std::memory_order_acquire);
            if (tail <= head)
                return nullptr;
            auto n = static_cast<std::size_t>(tail - head);
            n -= n / 2;
            if (n > grabbed.size())
                n = grabbed.size();
            for (std::size_t i = 0; i < n; ++i)
                grabbed[i] = victim.slots_[(head + i) % kCapacity].load(std::memory_order_relaxed);
            if (victim.head_.compare_exchange_weak(head, head + n, std::memory_order_acq_rel)) {
                for (std::size_t i = 1; i < n; ++i)
                    push(grabbed[i]);
                return grabbed[0];
            }
        }
    }

    std::size_t size() const noexcept
    {
        const auto t = tail_.load(std::memory_order_acquire);
        const auto h = head_.load(std::memory_order_acquire);
        return t > h ? static_cast<std::size_t>(t - h) : 0;
    }

  private:
    alignas(64) std::atomic<std::uint64_t> head_{0};
    alignas(64) std::atomic<std::uint64_t> tail_{0};
    std::array<std::atomic<Tcb*>, kCapacity> slots_;
};

struct BodyBase {
    virtual ~BodyBase() = default;
    virtual Task start() = 0;
};

template <class F>
struct Body final : BodyBase {
    explicit Body(F f) : fn(std::move(f)) {}
    Task start() override { return fn(); }
    F fn;
};

}  // namespace detail

struct WorkerSnapshot {
    bool parked = false;
    std::uint64_t sleep_epoch = 0;
    std::size_t local_size = 0;
    std::uint64_t executed = 0;
};

struct PoolSnapshot {
    std::size_t global_size = 0;
    std::uint64_t global_popped = 0;
    std::size_t ready = 0;
    std::size_t running = 0;
    std::uint64_t wake_epoch = 0;
    std::vector<WorkerSnapshot> workers;
};

class WorkerPool {
  public:
    explicit WorkerPool(unsigned workers, std::size_t global_capacity = 1u << 16);
    WorkerPool(const WorkerPool&) = delete;
    WorkerPool& operator=(const WorkerPool&) = delete;
    ~WorkerPool();

    /// body() must return a Task; the callable (and its captures) lives until
    /// the task finishes. The new task is Ready in the global queue. Throws
    /// PoolShutdown once shutdown() has begun.
    template <class F>
    TaskId spawn(F&& body)
    {
        auto holder = std::make_unique<detail::Body<std::decay_t<F>>>(std::forward<F>(body));
        return spawn_body(std::move(holder));
    }

    /// Makes a Blocked task Ready, or records a pending wake for a Ready or
    /// Running one. No-op on Done tasks; throws UnknownTask for ids never
    /// issued by this pool.
    void wake(TaskId id);
    TaskState state(TaskId id) const;

    /// Starts the worker threads. Workers take from their local queue, then the
    /// global queue, then steal.
    void run();
    /// Stops accepting spawns, waits until no task is Ready or Running, joins
    /// the workers and discards tasks left Blocked.
    void shutdown();

    bool started() const noexcept { return started_; }
    unsigned workers() const noexcept { return static_cast<unsigned>(workers_.size()); }
    std::size_t ready_count() const noexcept { return ready_.load(std::memory_order_acquire); }
    std::size_t running_count() const noexcept { return running_.load(std::memory_order_acquire); }
    std::size_t live_tasks() const noexcept { return live_.load(std::memory_order_acquire); }
    std::uint64_t spawned() const noexcept { return next_id_.load(std::memory_order_acquire) - 1; }
    PoolSnapshot snapshot() const;

    /// First exception escaping any task body.
    std::exception_ptr first_failure() const;

    /// Per-thread worker state; opaque outside the implementation.
    struct Worker;

  private:
    friend struct YieldAwaiter;
    friend struct BlockAwaiter;

    TaskId spawn_body(std::unique_ptr<detail::BodyBase> body);
    detail::Tcb* lookup(TaskId id) const;
    void enqueue(detail::Tcb* t, bool prefer_local);
    void notify_parked();
    void worker_main(Worker& w);
    detail::Tcb* find_work(Worker& w);
    bool any_work() const noexcept;
    void park(Worker& w);
    void execute(detail::Tcb* t);
    void finish(detail::Tcb* t);
    void wait_quiescent() const;

    static constexpr std::size_t kChunkBits = 12;
    static constexpr std::size_t kChunkSize = std::size_t{1} << kChunkBits;
    static constexpr std::size_t kMaxChunks = 4096;
    using Chunk = std::array<std::atomic<detail::Tcb*>, kChunkSize>;

    std::vector<std::unique_ptr<Worker>> workers_;
    detail::MpmcQueue<detail::Tcb*> global_;
    std::unique_ptr<std::atomic<Chunk*>[]> chunks_;
    std::atomic<std::uint64_t> next_id_{1};
    std::atomic<std::size_t> ready_{0};
    std::atomic<std::size_t> running_{0};
    std::atomic<std::size_t> live_{0};
    std::atomic<std::uint64_t> global_popped_{0};
    std::atomic<unsigned> parked_{0};
    std::atomic<std::uint64_t> epoch_{0};
    std::atomic<bool> accepting_{true};
    std::atomic<bool> stop_{false};
    bool started_ = false;
    bool shut_down_ = false;
    mutable std::mutex failure_mu_;
    std::exception_ptr failure_;
};

}  // namespace msnet::sched
