#include "msnet/nic.hpp"

#include "msnet/error.hpp"

#include <algorithm>

namespace msnet {

namespace {

constexpr std::uint8_t kMacSpacePf = 0x00;
constexpr std::uint8_t kMacSpaceVf = 0x01;
constexpr std::uint8_t kMacSpaceExternal = 0x02;

bool later(const auto& a, const auto& b)
{
    return a.due != b.due ? a.due > b.due : a.seq > b.seq;
}

}  // namespace

Medium::Medium(const MediumConfig& config, const Clock& clock)
    : config_(config)
    , clock_(clock)
    , rng_(config.seed)
    , loss_(std::clamp(config.loss_rate, 0.0, 1.0))
{
    std::lock_guard lock(mu_);
    pf_signal_ = std::make_shared<ConsumerSignal>();
    pf_ = attach_locked(NicKind::Pf, MacAddr::local(kMacSpacePf, 1), std::nullopt, pf_signal_);
}

std::unique_ptr<Medium> medium_create(std::size_t vf_budget, double loss_rate, Nanos latency,
                                      const Clock& clock)
{
    MediumConfig cfg;
    cfg.vf_budget = vf_budget;
    cfg.loss_rate = loss_rate;
    cfg.latency = latency;
    return std::make_unique<Medium>(cfg, clock);
}

std::shared_ptr<NicDevice> Medium::attach_locked(NicKind kind, MacAddr mac,
                                                 std::optional<AppId> owner,
                                                 std::shared_ptr<ConsumerSignal> rx_signal)
{
    auto [prod, cons] = create_channel<Frame>(config_.rx_capacity, std::move(rx_signal));
    const DeviceId id{next_device_++};
    auto dev = std::make_shared<NicDevice>(id, kind, mac, owner, std::move(cons));
    devices_.emplace(id, Entry{dev, std::move(prod), {}, Nanos{0}});
    by_mac_.emplace(mac, id);
    return dev;
}

void Medium::detach_locked(const NicDevice& dev)
{
    auto it = devices_.find(dev.id());
    if (it == devices_.end())
        return;
    for (auto ip : it->second.ips) {
        ip_owner_.erase(ip);
        arp_.erase(ip);
    }
    by_mac_.erase(dev.mac());
    it->second.dev->attached_.store(false, std::memory_order_release);
    devices_.erase(it);
}

Medium::Entry& Medium::entry_locked(const NicDevice& dev)
{
    auto it = devices_.find(dev.id());
    if (it == devices_.end())
        throw Error(Errc::InvalidArgument, "device is not attached to this medium");
    return it->second;
}

void Medium::claim_pf()
{
    std::lock_guard lock(mu_);
    if (pf_claimed_)
        throw Error(Errc::AlreadyRunning, "PF uplink already claimed");
    pf_claimed_ = true;
}

void Medium::release_pf()
{
    std::lock_guard lock(mu_);
    pf_claimed_ = false;
}

bool Medium::pf_claimed() const
{
    std::lock_guard lock(mu_);
    return pf_claimed_;
}

std::shared_ptr<NicDevice> Medium::vf_alloc(AppId owner, std::shared_ptr<ConsumerSignal> rx_signal)
{
    std::lock_guard lock(mu_);
    if (vf_live_ >= config_.vf_budget)
        throw Error(Errc::VfExhausted, "all " + std::to_string(config_.vf_budget) + " VFs in use");
    ++vf_live_;
    return attach_locked(NicKind::Vf, MacAddr::local(kMacSpaceVf, next_vf_mac_++), owner,
                         std::move(rx_signal));
}

void Medium::vf_free(const NicDevice& vf)
{
    if (vf.kind() != NicKind::Vf)
        throw Error(Errc::InvalidArgument, "not a VF");
    std::lock_guard lock(mu_);
    if (!devices_.contains(vf.id()))
        return;
    detach_locked(vf);
    --vf_live_;
}

std::size_t Medium::vf_count() const
{
    std::lock_guard lock(mu_);
    return vf_live_;
}

std::shared_ptr<NicDevice> Medium::attach_external(std::shared_ptr<ConsumerSignal> rx_signal)
{
    std::lock_guard lock(mu_);
    return attach_locked(NicKind::External, MacAddr::local(kMacSpaceExternal, next_ext_mac_++),
                         std::nullopt, std::move(rx_signal));
}

void Medium::ip_assign(const NicDevice& dev, Ipv4Addr ip)
{
    std::lock_guard lock(mu_);
    auto& e = entry_locked(dev);
    if (ip_owner_.contains(ip.to_u32()))
        throw Error(Errc::IpConflict, ip.to_string() + " already assigned on this medium");
    e.ips.insert(ip.to_u32());
    ip_owner_.emplace(ip.to_u32(), dev.id());
    arp_[ip.to_u32()] = dev.mac();
}

void Medium::ip_unassign(const NicDevice& dev, Ipv4Addr ip)
{
    std::lock_guard lock(mu_);
    auto& e = entry_locked(dev);
    if (!e.ips.erase(ip.to_u32()))
        throw Error(Errc::NotAssigned, ip.to_string() + " not assigned to device");
    ip_owner_.erase(ip.to_u32());
    arp_.erase(ip.to_u32());
}

std::vector<Ipv4Addr> Medium::assigned_ips(const NicDevice& dev) const
{
    std::lock_guard lock(mu_);
    std::vector<Ipv4Addr> out;
    if (auto it = devices_.find(dev.id()); it != devices_.end())
        for (auto ip : it->second.ips)
            out.push_back(Ipv4Addr::from_u32(ip));
    return out;
}

std::optional<DeviceId> Medium::ip_holder(Ipv4Addr ip) const
{
    std::lock_guard lock(mu_);
    if (auto it = ip_owner_.find(ip.to_u32()); it != ip_owner_.end())
        return it->second;
    return std::nullopt;
}

std::optional<MacAddr> Medium::resolve(Ipv4Addr ip) const
{
    std::lock_guard lock(mu_);
    if (auto it = arp_.find(ip.to_u32()); it != arp_.end())
        return it->second;
    return std::nullopt;
}

bool Medium::spoofed_locked(const Entry& e, const Frame& f) const
{
    if (f.src_mac() != e.dev->mac())
        return true;
    if (f.parsed())
        return !e.ips.contains(f.parsed()->src_ip.to_u32());
    if (auto arp = arp_view(f))
        return arp->sender_mac != e.dev->mac() || !e.ips.contains(arp->sender_ip.to_u32());
    return false;
}

void Medium::transmit(const NicDevice& dev, Frame frame)
{
    {
        std::lock_guard lock(mu_);
        auto it = devices_.find(dev.id());
        if (it == devices_.end()) {
            dropped_nodev_.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        auto& e = it->second;
        if (frame.encoded_size() > config_.mtu_frame) {
            dropped_oversize_.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        if (config_.spoof_check && spoofed_locked(e, frame)) {
            dropped_spoof_.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        transmitted_.fetch_add(1, std::memory_order_relaxed);
        if (tap_)
            tap_(*e.dev, frame);
        if (auto arp = arp_view(frame)) {
            // The announce remaps the IP for every peer; only its holder may do so.
            auto holder = ip_owner_.find(arp->sender_ip.to_u32());
            if (holder != ip_owner_.end() && holder->second == dev.id())
                arp_[arp->sender_ip.to_u32()] = arp->sender_mac;
        }
        if (config_.loss_rate > 0.0 && loss_(rng_)) {
            dropped_loss_.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        const Nanos now = clock_.now();
        Nanos depart = now;
        if (config_.link_bps > 0.0) {
            const auto bits = static_cast<double>(frame.encoded_size()) * 8.0;
            const Nanos wire(static_cast<Nanos::rep>(bits / config_.link_bps * 1e9));
            depart = std::max(now, e.tx_free_at) + wire;
            e.tx_free_at = depart;
        }
        in_flight_.push_back(InFlight{depart + config_.latency, next_seq_++, dev.id(), std::move(frame)});
        std::push_heap(in_flight_.begin(), in_flight_.end(),
                       [](const InFlight& a, const InFlight& b) { return later(a, b); });
    }
    signal_.notify_if_idle();
}

std::size_t Medium::deliver_due()
{
    struct Delivery {
        FrameProducer to;
        Frame frame;
    };
    std::vector<Delivery> batch;
    std::size_t handled = 0;
    {
        std::lock_guard lock(mu_);
        const Nanos now = clock_.now();
        const auto cmp = [](const InFlight& a, const InFlight& b) { return later(a, b); };
        while (!in_flight_.empty() && in_flight_.front().due <= now) {
            std::pop_heap(in_flight_.begin(), in_flight_.end(), cmp);
            InFlight item = std::move(in_flight_.back());
            in_flight_.pop_back();
            ++handled;
            const auto& dst = item.frame.dst_mac();
            if (dst.is_broadcast()) {
                for (auto& [id, e] : devices_)
                    if (id != item.from)
                        batch.push_back(Delivery{e.rx, item.frame});
                continue;
            }
            auto it = by_mac_.find(dst);
            if (it == by_mac_.end()) {
                dropped_nodev_.fetch_add(1, std::memory_order_relaxed);
                continue;
            }
            batch.push_back(Delivery{devices_.at(it->second).rx, std::move(item.frame)});
        }
    }
    // Single delivery context: this is the only producer of every rx queue.
    for (auto& d : batch) {
        if (d.to.try_push(std::move(d.frame)) == PushResult::Ok)
            delivered_.fetch_add(1, std::memory_order_relaxed);
        else
            dropped_overflow_.fetch_add(1, std::memory_order_relaxed);
    }
    return handled;
}

std::optional<Nanos> Medium::next_due() const
{
    std::lock_guard lock(mu_);
    if (in_flight_.empty())
        return std::nullopt;
    return in_flight_.front().due;
}

bool Medium::has_due() const
{
    std::lock_guard lock(mu_);
    return !in_flight_.empty() && in_flight_.front().due <= clock_.now();
}

MediumCounters Medium::counters() const
{
    MediumCounters c;
    c.transmitted = transmitted_.load(std::memory_order_relaxed);
    c.delivered = delivered_.load(std::memory_order_relaxed);
    c.dropped_loss = dropped_loss_.load(std::memory_order_relaxed);
    c.dropped_spoof = dropped_spoof_.load(std::memory_order_relaxed);
    c.dropped_overflow = dropped_overflow_.load(std::memory_order_relaxed);
    c.dropped_nodev = dropped_nodev_.load(std::memory_order_relaxed);
    c.dropped_oversize = dropped_oversize_.load(std::memory_order_relaxed);
    return c;
}

void Medium::set_tap(Tap tap)
{
    std::lock_guard lock(mu_);
    tap_ = std::move(tap);
}

}  // namespace msnet
