#include "msnet/sched.hpp"

#include <chrono>
#include <string>

namespace msnet::sched {

namespace detail {

inline constexpr std::uint32_t kStateMask = 0x3;
inline constexpr std::uint32_t kNotified = 0x4;

enum class Action : std::uint8_t { None, Yield, Block };

struct Tcb {
    TaskId id;
    WorkerPool* pool = nullptr;
    std::atomic<std::uint32_t> state{static_cast<std::uint32_t>(TaskState::Ready)};
    Task::Handle handle;
    std::unique_ptr<BodyBase> body;
    Action action = Action::None;
};

constexpr std::uint32_t bits(TaskState s) noexcept { return static_cast<std::uint32_t>(s); }
constexpr TaskState state_of(std::uint32_t word) noexcept
{
    return static_cast<TaskState>(word & kStateMask);
}

}  // namespace detail

using detail::Tcb;

struct WorkerPool::Worker {
    detail::LocalQueue local;
    std::atomic<bool> parked{false};
    std::atomic<std::uint64_t> sleep_epoch{0};
    std::atomic<std::uint64_t> executed{0};
    std::uint64_t tick = 0;
    std::size_t victim = 0;
    std::size_t index = 0;
    std::thread thread;
};

namespace {

thread_local WorkerPool* tls_pool = nullptr;
thread_local WorkerPool::Worker* tls_worker = nullptr;
thread_local Tcb* tls_task = nullptr;

// Every this many scheduling ticks a worker looks at the global queue before
// its own, so tasks parked there cannot starve behind a busy local queue.
constexpr std::uint64_t kGlobalCheckInterval = 61;

}  // namespace

TaskId current_task() noexcept { return tls_task ? tls_task->id : TaskId{}; }
WorkerPool* current_pool() noexcept { return tls_pool; }

void YieldAwaiter::await_suspend(Task::Handle h) const noexcept
{
    h.promise().tcb->action = detail::Action::Yield;
}

bool BlockAwaiter::await_suspend(Task::Handle h) const noexcept
{
    Tcb* t = h.promise().tcb;
    auto s = t->state.load(std::memory_order_acquire);
    while (s & detail::kNotified) {
        if (t->state.compare_exchange_weak(s, s & ~detail::kNotified, std::memory_order_acq_rel))
            return false;
    }
    t->action = detail::Action::Block;
    return true;
}

WorkerPool::WorkerPool(unsigned workers, std::size_t global_capacity)
    : global_(global_capacity)
    , chunks_(std::make_unique<std::atomic<Chunk*>[]>(kMaxChunks))
{
    if (workers == 0)
        throw Error(Errc::InvalidArgument, "worker count must be at least 1");
    if (global_capacity < 2 || (global_capacity & (global_capacity - 1)) != 0)
        throw Error(Errc::BadCapacity, "global queue capacity must be a power of two");
    for (std::size_t i = 0; i < kMaxChunks; ++i)
        chunks_[i].store(nullptr, std::memory_order_relaxed);
    for (unsigned i = 0; i < workers; ++i) {
        workers_.push_back(std::make_unique<Worker>());
        workers_.back()->index = i;
        workers_.back()->victim = i + 1;
    }
}

WorkerPool::~WorkerPool()
{
    shutdown();
    for (std::size_t c = 0; c < kMaxChunks; ++c) {
        Chunk* chunk = chunks_[c].load(std::memory_order_acquire);
        if (!chunk)
            continue;
        for (auto& slot : *chunk)
            delete slot.load(std::memory_order_acquire);
        delete chunk;
    }
}

TaskId WorkerPool::spawn_body(std::unique_ptr<detail::BodyBase> body)
{
    if (!accepting_.load(std::memory_order_acquire))
        throw Error(Errc::PoolShutdown, "spawn after shutdown");

    const auto id = next_id_.fetch_add(1, std::memory_order_acq_rel);
    const auto index = id - 1;
    const auto chunk_index = index >> kChunkBits;
    if (chunk_index >= kMaxChunks)
        throw Error(Errc::Exhausted, "task registry full");

    auto tcb = std::make_unique<Tcb>();
    tcb->id = TaskId{id};
    tcb->pool = this;
    Task task = body->start();
    tcb->handle = task.release();
    tcb->handle.promise().tcb = tcb.get();
    tcb->body = std::move(body);

    auto& chunk_slot = chunks_[chunk_index];
    Chunk* chunk = chunk_slot.load(std::memory_order_acquire);
    if (!chunk) {
        auto fresh = std::make_unique<Chunk>();
        for (auto& s : *fresh)
            s.store(nullptr, std::memory_order_relaxed);
        if (chunk_slot.compare_exchange_strong(chunk, fresh.get(), std::memory_order_acq_rel))
            chunk = fresh.release();
    }
    Tcb* raw = tcb.release();
    (*chunk)[index & (kChunkSize - 1)].store(raw, std::memory_order_release);
    live_.fetch_add(1, std::memory_order_acq_rel);
    enqueue(raw, false);
    return raw->id;
}

Tcb* WorkerPool::lookup(TaskId id) const
{
    if (!id || id.value >= next_id_.load(std::memory_order_acquire))
        throw Error(Errc::UnknownTask, "task " + std::to_string(id.value));
    const auto index = id.value - 1;
    for (;;) {
        Chunk* chunk = chunks_[index >> kChunkBits].load(std::memory_order_acquire);
        if (chunk) {
            if (Tcb* t = (*chunk)[index & (kChunkSize - 1)].load(std::memory_order_acquire))
                return t;
        }
        // The id is issued but its spawn has not published yet.
        std::this_thread::yield();
    }
}

void WorkerPool::enqueue(Tcb* t, bool prefer_local)
{
    ready_.fetch_add(1, std::memory_order_acq_rel);
    const bool local = prefer_local && tls_pool == this && tls_worker &&
                       tls_worker->local.push(t);
    if (!local) {
        while (!global_.try_push(t))
            std::this_thread::yield();
    }
    notify_parked();
}

void WorkerPool::notify_parked()
{
    std::atomic_thread_fence(std::memory_order_seq_cst);
    if (parked_.load(std::memory_order_seq_cst) > 0) {
        epoch_.fetch_add(1, std::memory_order_acq_rel);
        epoch_.notify_all();
    }
}

void WorkerPool::wake(TaskId id)
{
    Tcb* t = lookup(id);
    auto s = t->state.load(std::memory_order_acquire);
    for (;;) {
        switch (detail::state_of(s)) {
        case TaskState::Done:
            return;
        case TaskState::Blocked:
            if (t->state.compare_exchange_weak(s, detail::bits(TaskState::Ready),
                                               std::memory_order_acq_rel)) {
                enqueue(t, true);
                return;
            }
            break;
        case TaskState::Ready:
        case TaskState::Running:
            if (s & detail::kNotified)
                return;
            if (t->state.compare_exchange_weak(s, s | detail::kNotified, std::memory_order_acq_rel))
                return;
            break;
        }
    }
}

TaskState WorkerPool::state(TaskId id) const
{
    return detail::state_of(lookup(id)->state.load(std::memory_order_acquire));
}

void WorkerPool::run()
{
    if (started_)
        throw Error(Errc::AlreadyRunning, "worker pool already running");
    if (!accepting_.load())
        throw Error(Errc::PoolShutdown, "pool has been shut down");
    started_ = true;
    for (auto& w : workers_) {
        Worker* wp = w.get();
        wp->thread = std::thread([this, wp] { worker_main(*wp); });
    }
}

void WorkerPool::wait_quiescent() const
{
    using namespace std::chrono_literals;
    for (;;) {
        if (ready_.load(std::memory_order_acquire) == 0 &&
            running_.load(std::memory_order_acquire) == 0)
            return;
        std::this_thread::sleep_for(100us);
    }
}

void WorkerPool::shutdown()
{
    if (shut_down_)
        return;
    shut_down_ = true;
    accepting_.store(false, std::memory_order_release);
    if (started_) {
        wait_quiescent();
        stop_.store(true, std::memory_order_release);
        epoch_.fetch_add(1, std::memory_order_acq_rel);
        epoch_.notify_all();
        for (auto& w : workers_)
            if (w->thread.joinable())
                w->thread.join();
    }
    // Tasks still Blocked (or never run) are discarded with their frames.
    const auto issued = next_id_.load(std::memory_order_acquire) - 1;
    for (std::uint64_t i = 0; i < issued; ++i) {
        Chunk* chunk = chunks_[i >> kChunkBits].load(std::memory_order_acquire);
        if (!chunk)
            continue;
        Tcb* t = (*chunk)[i & (kChunkSize - 1)].load(std::memory_order_acquire);
        if (!t || detail::state_of(t->state.load()) == TaskState::Done)
            continue;
        t->state.store(detail::bits(TaskState::Done), std::memory_order_release);
        if (t->handle)
            t->handle.destroy();
        t->handle = {};
        t->body.reset();
        live_.fetch_sub(1, std::memory_order_acq_rel);
    }
}

void WorkerPool::worker_main(Worker& w)
{
    tls_pool = this;
    tls_worker = &w;
    while (!stop_.load(std::memory_order_acquire)) {
        Tcb* t = find_work(w);
        if (!t) {
            park(w);
            continue;
        }
        execute(t);
        w.executed.fetch_add(1, std::memory_order_relaxed);
    }
    tls_worker = nullptr;
    tls_pool = nullptr;
}

Tcb* WorkerPool::find_work(Worker& w)
{
    Tcb* t = nullptr;
    // Counted as running before it stops counting as ready, so an observer
    // never sees a taken task in neither count.
    auto take = [&](Tcb* found) {
        running_.fetch_add(1, std::memory_order_acq_rel);
        ready_.fetch_sub(1, std::memory_order_acq_rel);
        return found;
    };
    auto pop_global = [&]() -> Tcb* {
        Tcb* g = nullptr;
        if (!global_.try_pop(g))
            return nullptr;
        global_popped_.fetch_add(1, std::memory_order_relaxed);
        return g;
    };

    if (++w.tick % kGlobalCheckInterval == 0) {
        if ((t = pop_global()))
            return take(t);
    }
    if ((t = w.local.pop()))
        return take(t);
    if ((t = pop_global()))
        return take(t);
    const auto n = workers_.size();
    for (std::size_t i = 0; i < n; ++i) {
        Worker& victim = *workers_[w.victim++ % n];
        if (&victim == &w)
            continue;
        if ((t = w.local.steal_half(victim.local)))
            return take(t);
    }
    return nullptr;
}

bool WorkerPool::any_work() const noexcept
{
    if (global_.size() > 0)
        return true;
    for (const auto& w : workers_)
        if (w->local.size() > 0)
            return true;
    return false;
}

void WorkerPool::park(Worker& w)
{
    const auto e = epoch_.load(std::memory_order_acquire);
    w.sleep_epoch.store(e, std::memory_order_relaxed);
    w.parked.store(true, std::memory_order_relaxed);
    parked_.fetch_add(1, std::memory_order_seq_cst);
    std::atomic_thread_fence(std::memory_order_seq_cst);
    if (!any_work() && !stop_.load(std::memory_order_acquire))
        epoch_.wait(e, std::memory_order_acquire);
    parked_.fetch_sub(1, std::memory_order_seq_cst);
    w.parked.store(false, std::memory_order_relaxed);
}

void WorkerPool::execute(Tcb* t)
{
    auto s = t->state.load(std::memory_order_acquire);
    while (!t->state.compare_exchange_weak(
        s, detail::bits(TaskState::Running) | (s & detail::kNotified), std::memory_order_acq_rel)) {
    }

    Tcb* outer = tls_task;
    tls_task = t;
    t->action = detail::Action::None;
    t->handle.resume();
    tls_task = outer;

    if (t->handle.done()) {
        finish(t);
    } else if (t->action == detail::Action::Block) {
        s = t->state.load(std::memory_order_acquire);
        for (;;) {
            if (s & detail::kNotified) {
                if (t->state.compare_exchange_weak(s, detail::bits(TaskState::Ready),
                                                   std::memory_order_acq_rel)) {
                    enqueue(t, true);
                    break;
                }
            } else if (t->state.compare_exchange_weak(s, detail::bits(TaskState::Blocked),
                                                      std::memory_order_acq_rel)) {
                break;
            }
        }
    } else {
        // Yield, or a suspension on some other awaiter: back of the global queue.
        s = t->state.load(std::memory_order_acquire);
        while (!t->state.compare_exchange_weak(
            s, detail::bits(TaskState::Ready) | (s & detail::kNotified),
            std::memory_order_acq_rel)) {
        }
        enqueue(t, false);
    }
    running_.fetch_sub(1, std::memory_order_acq_rel);
}

void WorkerPool::finish(Tcb* t)
{
    if (auto err = t->handle.promise().error) {
        std::lock_guard lock(failure_mu_);
        if (!failure_)
            failure_ = err;
    }
    t->handle.destroy();
    t->handle = {};
    t->body.reset();
    t->state.store(detail::bits(TaskState::Done), std::memory_order_release);
    live_.fetch_sub(1, std::memory_order_acq_rel);
}

PoolSnapshot WorkerPool::snapshot() const
{
    PoolSnapshot snap;
    snap.global_size = global_.size();
    snap.global_popped = global_popped_.load(std::memory_order_relaxed);
    snap.ready = ready_count();
    snap.running = running_count();
    snap.wake_epoch = epoch_.load(std::memory_order_acquire);
    for (const auto& w : workers_) {
        WorkerSnapshot ws;
        ws.parked = w->parked.load(std::memory_order_acquire);
        ws.sleep_epoch = w->sleep_epoch.load(std::memory_order_relaxed);
        ws.local_size = w->local.size();
        ws.executed = w->executed.load(std::memory_order_relaxed);
        snap.workers.push_back(ws);
    }
    return snap;
}

std::exception_ptr WorkerPool::first_failure() const
{
    std::lock_guard lock(failure_mu_);
    return failure_;
}

}  // namespace msnet::sched
