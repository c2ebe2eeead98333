#include "msnet/timers.hpp"

#include <algorithm>

namespace msnet {

namespace {

template <class E>
bool later(const E& a, const E& b)
{
    return a.deadline != b.deadline ? a.deadline > b.deadline : a.seq > b.seq;
}

}  // namespace

void TimerService::arm(sched::TaskId task, Nanos deadline)
{
    bool earlier = false;
    std::function<void()> hook;
    {
        std::lock_guard lock(mu_);
        prune_locked();
        earlier = heap_.empty() || deadline < heap_.front().deadline;
        const auto seq = next_seq_++;
        current_[task] = seq;
        heap_.push_back(Entry{deadline, seq, task});
        std::push_heap(heap_.begin(), heap_.end(), later<Entry>);
        if (earlier)
            hook = on_earlier_;
    }
    if (hook)
        hook();
}

void TimerService::cancel(sched::TaskId task)
{
    std::lock_guard lock(mu_);
    current_.erase(task);
}

void TimerService::prune_locked() const
{
    while (!heap_.empty()) {
        const auto& top = heap_.front();
        auto it = current_.find(top.task);
        if (it != current_.end() && it->second == top.seq)
            return;
        std::pop_heap(heap_.begin(), heap_.end(), later<Entry>);
        heap_.pop_back();
    }
}

std::size_t TimerService::fire_due(Nanos now)
{
    std::vector<sched::TaskId> due;
    {
        std::lock_guard lock(mu_);
        for (;;) {
            prune_locked();
            if (heap_.empty() || heap_.front().deadline > now)
                break;
            due.push_back(heap_.front().task);
            current_.erase(heap_.front().task);
            std::pop_heap(heap_.begin(), heap_.end(), later<Entry>);
            heap_.pop_back();
        }
    }
    for (auto id : due)
        pool_.wake(id);
    return due.size();
}

std::optional<Nanos> TimerService::next_deadline() const
{
    std::lock_guard lock(mu_);
    prune_locked();
    if (heap_.empty())
        return std::nullopt;
    return heap_.front().deadline;
}

std::size_t TimerService::pending() const
{
    std::lock_guard lock(mu_);
    return current_.size();
}

void TimerService::set_on_earlier(std::function<void()> hook)
{
    std::lock_guard lock(mu_);
    on_earlier_ = std::move(hook);
}

}  // namespace msnet
