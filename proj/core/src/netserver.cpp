#include "msnet/netserver.hpp"

#include "msnet/error.hpp"

#include <algorithm>

namespace msnet {

ServerLink::ServerLink(AppId id, std::size_t capacity,
                       std::shared_ptr<ConsumerSignal> server_signal,
                       std::shared_ptr<ConsumerSignal> app_signal)
    : app(id)
{
    auto [tx_p, tx_c] = create_channel<Frame>(capacity, std::move(server_signal));
    auto [rx_p, rx_c] = create_channel<Frame>(capacity, std::move(app_signal));
    app_tx = std::move(tx_p);
    server_tx = std::move(tx_c);
    server_rx = std::move(rx_p);
    app_rx = std::move(rx_c);
}

NetServer::NetServer(Medium& medium, PortmapView portmap, std::uint64_t epoch,
                     std::vector<HandlerSpec> handlers)
    : medium_(medium)
    , portmap_(portmap)
    , pf_(medium.pf())
    , signal_(medium.pf_signal())
    , epoch_(epoch)
{
    medium_.claim_pf();
    for (auto& spec : handlers)
        handlers_.push_back(std::make_unique<Handler>(std::move(spec)));
}

NetServer::~NetServer()
{
    if (!halted_.load(std::memory_order_acquire))
        medium_.release_pf();
}

void NetServer::attach(sched::WorkerPool& pool)
{
    pool_ = &pool;
    task_ = pool.spawn([this]() { return loop(); });
    const auto id = *task_;
    signal_->set_waker([&pool, id] { pool.wake(id); });
    // A doorbell rung before the waker was installed would otherwise be lost.
    pool.wake(id);
}

NetServer::Handler* NetServer::find(AppId app) const
{
    for (const auto& h : handlers_)
        if (h->spec.app == app)
            return h.get();
    return nullptr;
}

void NetServer::serve_outbound(AppId app, Frame frame)
{
    Handler* h = find(app);
    if (!h)
        return;
    const auto& flow = frame.parsed();
    const bool ok = frame.src_mac() == h->spec.expected_mac && flow &&
                    flow->src_ip == h->spec.expected_ip && flow->src_port != 0 &&
                    portmap_.lookup(flow->proto, flow->src_port) == std::optional<AppId>(app);
    if (!ok) {
        h->dropped_spoof.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    medium_.transmit(*pf_, std::move(frame));
    h->forwarded.fetch_add(1, std::memory_order_relaxed);
    h->spec.link->server_handoffs.fetch_add(1, std::memory_order_relaxed);
}

void NetServer::route_inbound(Frame frame)
{
    const auto& flow = frame.parsed();
    if (!flow || flow->dst_port == 0) {
        dropped_noroute_.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    const auto owner = portmap_.lookup(flow->proto, flow->dst_port);
    Handler* h = owner ? find(*owner) : nullptr;
    if (!h) {
        dropped_noroute_.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    if (h->spec.link->server_rx.try_push(std::move(frame)) == PushResult::Full) {
        h->dropped_full.fetch_add(1, std::memory_order_relaxed);
        return;
    }
    h->delivered.fetch_add(1, std::memory_order_relaxed);
}

void NetServer::add_handler(HandlerSpec spec)
{
    {
        std::lock_guard lock(mailbox_mu_);
        mailbox_.push_back(MailboxOp{true, std::move(spec)});
        mailbox_pending_.store(true, std::memory_order_release);
    }
    signal_->notify_if_idle();
}

void NetServer::remove_handler(AppId app)
{
    {
        std::lock_guard lock(mailbox_mu_);
        mailbox_.push_back(MailboxOp{false, HandlerSpec{app, {}, {}, nullptr}});
        mailbox_pending_.store(true, std::memory_order_release);
    }
    signal_->notify_if_idle();
}

void NetServer::apply_mailbox()
{
    if (!mailbox_pending_.load(std::memory_order_acquire))
        return;
    std::vector<MailboxOp> ops;
    {
        std::lock_guard lock(mailbox_mu_);
        ops.swap(mailbox_);
        mailbox_pending_.store(false, std::memory_order_release);
    }
    std::lock_guard lock(handlers_mu_);
    for (auto& op : ops) {
        auto it = std::find_if(handlers_.begin(), handlers_.end(),
                               [&](const auto& h) { return h->spec.app == op.spec.app; });
        if (it != handlers_.end()) {
            const auto& h = **it;
            retired_forwarded_ += h.forwarded.load();
            retired_delivered_ += h.delivered.load();
            retired_spoof_ += h.dropped_spoof.load();
            retired_full_ += h.dropped_full.load();
            handlers_.erase(it);
        }
        if (op.add)
            handlers_.push_back(std::make_unique<Handler>(std::move(op.spec)));
    }
}

std::size_t NetServer::poll_once(std::size_t budget)
{
    if (!alive())
        return 0;
    apply_mailbox();
    std::size_t handled = 0;
    for (std::size_t i = 0; i < handlers_.size(); ++i) {
        Handler* h = handlers_[i].get();
        for (std::size_t n = 0; n < budget && alive(); ++n) {
            auto frame = h->spec.link->server_tx.try_pop();
            if (!frame)
                break;
            serve_outbound(h->spec.app, std::move(*frame));
            ++handled;
        }
    }
    for (std::size_t n = 0; n < budget && alive(); ++n) {
        auto frame = pf_->rx().try_pop();
        if (!frame)
            break;
        route_inbound(std::move(*frame));
        ++handled;
    }
    return handled;
}

bool NetServer::has_pending() const
{
    if (mailbox_pending_.load(std::memory_order_acquire) || !pf_->rx().empty())
        return true;
    for (const auto& h : handlers_)
        if (!h->spec.link->server_tx.empty())
            return true;
    return false;
}

sched::Task NetServer::loop()
{
    signal_->enter();
    while (alive()) {
        if (poll_once() > 0) {
            co_await sched::yield_now();
            continue;
        }
        signal_->leave();
        if (alive() && !has_pending())
            co_await sched::block();
        signal_->enter();
    }
    signal_->leave();
    halt();
}

void NetServer::crash()
{
    alive_.store(false, std::memory_order_release);
    if (task_)
        pool_->wake(*task_);
    else
        halt();
}

void NetServer::halt()
{
    {
        std::lock_guard lock(handlers_mu_);
        for (const auto& h : handlers_) {
            retired_forwarded_ += h->forwarded.load();
            retired_delivered_ += h->delivered.load();
            retired_spoof_ += h->dropped_spoof.load();
            retired_full_ += h->dropped_full.load();
        }
        handlers_.clear();
    }
    {
        std::lock_guard lock(mailbox_mu_);
        mailbox_.clear();
        mailbox_pending_.store(false, std::memory_order_release);
    }
    medium_.release_pf();
    halted_.store(true, std::memory_order_release);
}

ServerStats NetServer::stats() const
{
    ServerStats s;
    s.epoch = epoch_;
    s.alive = alive();
    s.dropped_noroute = dropped_noroute_.load(std::memory_order_relaxed);
    s.forwarded = retired_forwarded_.load(std::memory_order_relaxed);
    s.delivered = retired_delivered_.load(std::memory_order_relaxed);
    s.dropped_spoof = retired_spoof_.load(std::memory_order_relaxed);
    s.dropped_full = retired_full_.load(std::memory_order_relaxed);
    std::lock_guard lock(handlers_mu_);
    s.handlers = handlers_.size();
    for (const auto& h : handlers_) {
        HandlerCounters c;
        c.app = h->spec.app;
        c.forwarded = h->forwarded.load(std::memory_order_relaxed);
        c.delivered = h->delivered.load(std::memory_order_relaxed);
        c.dropped_spoof = h->dropped_spoof.load(std::memory_order_relaxed);
        c.dropped_full = h->dropped_full.load(std::memory_order_relaxed);
        s.forwarded += c.forwarded;
        s.delivered += c.delivered;
        s.dropped_spoof += c.dropped_spoof;
        s.dropped_full += c.dropped_full;
        s.per_handler.push_back(c);
    }
    return s;
}

}  // namespace msnet
