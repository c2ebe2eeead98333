#include "msnet/ring.hpp"

namespace msnet {

void ConsumerSignal::leave() noexcept
{
    active_.fetch_sub(1, std::memory_order_seq_cst);
}

bool ConsumerSignal::notify_if_idle()
{
    // Pairs with the fence between leave() and the consumer's emptiness re-check.
    std::atomic_thread_fence(std::memory_order_seq_cst);
    if (active_.load(std::memory_order_relaxed) != 0)
        return false;
    ring();
    return true;
}

void ConsumerSignal::ring()
{
    rings_.fetch_add(1, std::memory_order_acq_rel);
    rings_.notify_all();
    if (const auto* waker = waker_.load(std::memory_order_acquire))
        (*waker)();
}

void ConsumerSignal::set_waker(std::function<void()> waker)
{
    auto owned = std::make_unique<const std::function<void()>>(std::move(waker));
    std::lock_guard lock(waker_mu_);
    waker_.store(owned.get(), std::memory_order_release);
    wakers_.push_back(std::move(owned));
}

}  // namespace msnet
