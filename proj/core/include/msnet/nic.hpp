#pragma once

#include "msnet/clock.hpp"
#include "msnet/frame.hpp"
#include "msnet/ring.hpp"
#include "msnet/types.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace msnet {

enum class NicKind : std::uint8_t {
    Pf,
    Vf,
    /// A peer machine's port on the wire; not part of the SR-IOV budget.
    External,
};

struct DeviceId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(DeviceId, DeviceId) = default;
};

/// A device endpoint on the medium. Frames addressed to its MAC land in its
/// rx queue, which only the device's consumer context may drain.
class NicDevice {
  public:
    NicDevice(DeviceId id, NicKind kind, MacAddr mac, std::optional<AppId> owner,
              FrameConsumer rx)
        : id_(id)
        , kind_(kind)
        , mac_(mac)
        , owner_(owner)
        , rx_(std::move(rx))
    {
    }

    DeviceId id() const noexcept { return id_; }
    NicKind kind() const noexcept { return kind_; }
    const MacAddr& mac() const noexcept { return mac_; }
    std::optional<AppId> owner() const noexcept { return owner_; }
    FrameConsumer& rx() noexcept { return rx_; }
    /// False once freed or detached; no new frames will be delivered.
    bool attached() const noexcept { return attached_.load(std::memory_order_acquire); }

  private:
    friend class Medium;

    DeviceId id_;
    NicKind kind_;
    MacAddr mac_;
    std::optional<AppId> owner_;
    FrameConsumer rx_;
    std::atomic<bool> attached_{true};
};

struct MediumConfig {
    std::size_t vf_budget = 16;
    double loss_rate = 0.0;
    Nanos latency{0};
    /// Per-sender serialization rate in bits/s; 0 means unlimited.
    double link_bps = 0.0;
    bool spoof_check = true;
    std::size_t rx_capacity = kDefaultRingCapacity;
    std::size_t mtu_frame = kDefaultMtuFrame;
    std::uint64_t seed = 1;
};

struct MediumCounters {
    std::uint64_t transmitted = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_loss = 0;
    std::uint64_t dropped_spoof = 0;
    std::uint64_t dropped_overflow = 0;
    std::uint64_t dropped_nodev = 0;
    std::uint64_t dropped_oversize = 0;
};

/// The shared wire: one PF, a bounded pool of VFs, and any number of external
/// peers. transmit() may be called from any context; delivery into device rx
/// queues happens only in deliver_due(), run by a single medium context.
class Medium {
  public:
    /// Observes every frame accepted onto the wire (after spoof filtering,
    /// before loss). Runs under the medium lock; must not call back in.
    using Tap = std::function<void(const NicDevice& from, const Frame& frame)>;

    Medium(const MediumConfig& config, const Clock& clock);
    Medium(const Medium&) = delete;
    Medium& operator=(const Medium&) = delete;

    const MediumConfig& config() const noexcept { return config_; }
    const Clock& clock() const noexcept { return clock_; }

    std::shared_ptr<NicDevice> pf() const { return pf_; }
    /// Signal of the PF rx queue. The network server shares it with every
    /// channel it drains so one doorbell covers its whole serving loop.
    std::shared_ptr<ConsumerSignal> pf_signal() const { return pf_signal_; }
    /// Single-holder claim on the PF for a network server instance.
    void claim_pf();
    void release_pf();
    bool pf_claimed() const;

    /// Throws VfExhausted once vf_budget VFs are live. Every allocation gets a
    /// fresh MAC.
    std::shared_ptr<NicDevice> vf_alloc(AppId owner, std::shared_ptr<ConsumerSignal> rx_signal = {});
    /// Returns the VF to the budget; its IPs are unassigned.
    void vf_free(const NicDevice& vf);
    std::size_t vf_count() const;

    std::shared_ptr<NicDevice> attach_external(std::shared_ptr<ConsumerSignal> rx_signal = {});

    /// Throws IpConflict when ip is held by any device on this medium.
    void ip_assign(const NicDevice& dev, Ipv4Addr ip);
    /// Throws NotAssigned when dev does not hold ip. Invalidates the ARP entry.
    void ip_unassign(const NicDevice& dev, Ipv4Addr ip);
    std::vector<Ipv4Addr> assigned_ips(const NicDevice& dev) const;
    std::optional<DeviceId> ip_holder(Ipv4Addr ip) const;

    /// IP to MAC mapping as seen on the wire (the medium's delivery map).
    std::optional<MacAddr> resolve(Ipv4Addr ip) const;

    /// Drops are counted, never raised.
    void transmit(const NicDevice& dev, Frame frame);

    /// Medium context only: moves every frame whose delivery time has passed
    /// into the destination rx queues. Returns the number of frames handled.
    std::size_t deliver_due();
    std::optional<Nanos> next_due() const;
    bool has_due() const;

    /// Activity/doorbell of the delivery context; rung by transmit().
    ConsumerSignal& signal() noexcept { return signal_; }

    MediumCounters counters() const;
    void set_tap(Tap tap);

  private:
    struct Entry {
        std::shared_ptr<NicDevice> dev;
        FrameProducer rx;
        std::set<std::uint32_t> ips;
        Nanos tx_free_at{0};
    };
    struct InFlight {
        Nanos due;
        std::uint64_t seq;
        DeviceId from;
        Frame frame;
    };

    std::shared_ptr<NicDevice> attach_locked(NicKind kind, MacAddr mac, std::optional<AppId> owner,
                                             std::shared_ptr<ConsumerSignal> rx_signal);
    void detach_locked(const NicDevice& dev);
    Entry& entry_locked(const NicDevice& dev);
    bool spoofed_locked(const Entry& e, const Frame& f) const;

    const MediumConfig config_;
    const Clock& clock_;
    mutable std::mutex mu_;
    std::map<DeviceId, Entry> devices_;
    std::map<MacAddr, DeviceId> by_mac_;
    std::map<std::uint32_t, DeviceId> ip_owner_;
    std::map<std::uint32_t, MacAddr> arp_;
    std::vector<InFlight> in_flight_;  // min-heap on (due, seq)
    std::uint64_t next_seq_ = 0;
    std::uint32_t next_device_ = 1;
    std::uint32_t next_vf_mac_ = 1;
    std::uint32_t next_ext_mac_ = 1;
    std::size_t vf_live_ = 0;
    bool pf_claimed_ = false;
    std::mt19937_64 rng_;
    std::bernoulli_distribution loss_;
    std::shared_ptr<ConsumerSignal> pf_signal_;
    std::shared_ptr<NicDevice> pf_;
    ConsumerSignal signal_;
    Tap tap_;

    std::atomic<std::uint64_t> transmitted_{0};
    std::atomic<std::uint64_t> delivered_{0};
    std::atomic<std::uint64_t> dropped_loss_{0};
    std::atomic<std::uint64_t> dropped_spoof_{0};
    std::atomic<std::uint64_t> dropped_overflow_{0};
    std::atomic<std::uint64_t> dropped_nodev_{0};
    std::atomic<std::uint64_t> dropped_oversize_{0};
};

/// Convenience constructor matching the common test setup: PF pre-created,
/// no VFs.
std::unique_ptr<Medium> medium_create(std::size_t vf_budget, double loss_rate, Nanos latency,
                                      const Clock& clock);

}  // namespace msnet
