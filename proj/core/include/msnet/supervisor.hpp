#pragma once

#include "msnet/frame.hpp"
#include "msnet/netserver.hpp"
#include "msnet/nic.hpp"
#include "msnet/portmap.hpp"
#include "msnet/ring.hpp"
#include "msnet/sched.hpp"
#include "msnet/types.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace msnet {

class Vif;
struct SwitchPlan;

/// Contiguous address range handed out lowest-address-first.
class IpPool {
  public:
    IpPool(Ipv4Addr first, Ipv4Addr last);

    /// Throws PoolExhausted.
    Ipv4Addr alloc();
    /// Throws NotAllocated.
    void free(Ipv4Addr ip);
    /// Claims a specific address; throws NotAllocated if outside the range and
    /// IpConflict if already taken.
    void claim(Ipv4Addr ip);

    bool is_allocated(Ipv4Addr ip) const { return allocated_.contains(ip.to_u32()); }
    std::size_t size() const noexcept { return last_ - first_ + 1; }
    std::size_t allocated_count() const noexcept { return allocated_.size(); }
    Ipv4Addr first() const noexcept { return Ipv4Addr::from_u32(first_); }
    Ipv4Addr last() const noexcept { return Ipv4Addr::from_u32(last_); }
    std::vector<Ipv4Addr> allocated() const;

  private:
    std::uint32_t first_;
    std::uint32_t last_;
    std::set<std::uint32_t> allocated_;
};

struct AppRecord {
    AppId id;
    std::string name;
    MacAddr mac;
    Ipv4Addr ip;
    Mode mode = Mode::Server;
    /// Ring pair to the network server. Apps registered in Server mode keep it
    /// while switched to Direct; apps registered Direct never have one.
    std::shared_ptr<ServerLink> link;
    std::shared_ptr<NicDevice> vf;
    std::shared_ptr<Vif> vif;
    /// The app loop's consumer signal; device rx queues created for the app
    /// share it.
    std::shared_ptr<ConsumerSignal> signal;
    /// Restored from a snapshot without live handles; reattached by name on
    /// the next registration.
    bool detached = false;
    /// A detached record's snapshot flag for the ring pair it had, kept so
    /// that snapshots taken after a restore are unchanged.
    bool had_link = false;
};

struct SupervisorConfig {
    Ipv4Addr pool_first = Ipv4Addr::from_u32(0x0a00000a);  // 10.0.0.10
    Ipv4Addr pool_last = Ipv4Addr::from_u32(0x0a0000fe);   // 10.0.0.254
    PortRange dynamic_range{};
    std::size_t ring_capacity = kDefaultRingCapacity;
};

struct Registration {
    AppId id;
    Mode mode = Mode::Server;
    Ipv4Addr ip;
    MacAddr mac;
    std::shared_ptr<ServerLink> link;
    std::shared_ptr<NicDevice> vf;
    /// Direct was requested but the VF budget was exhausted.
    bool fell_back = false;
};

/// The durable authority: application records, the portmap and the IP pool.
/// Every mutation is serialized under one lock; the network server only ever
/// sees a read-only portmap view and handler specs.
class Supervisor {
  public:
    Supervisor(Medium& medium, SupervisorConfig config = {});
    Supervisor(const Supervisor&) = delete;
    Supervisor& operator=(const Supervisor&) = delete;
    ~Supervisor();

    Medium& medium() noexcept { return medium_; }

    /// Allocates the app's IP and, for Direct, a VF holding that IP; for
    /// Server, a ring pair and a handler on the live server. app_signal is the
    /// app loop's consumer signal. VfExhausted propagates unless
    /// fallback_to_server is set. A detached record with the same name is
    /// reattached with its id, IP and ports.
    Registration app_register(const std::string& name, Mode mode,
                              std::shared_ptr<ConsumerSignal> app_signal,
                              bool fallback_to_server = false);
    /// Frees ports, IP and VF and removes the handler. Throws UnknownApp.
    void app_unregister(AppId app);
    void attach_vif(AppId app, std::shared_ptr<Vif> vif);

    std::optional<AppRecord> app(AppId id) const;
    std::optional<AppRecord> app_by_name(const std::string& name) const;
    std::vector<AppRecord> apps() const;

    std::uint16_t portbind(AppId app, Proto proto, std::uint16_t port);
    void port_release(AppId app, Proto proto, std::uint16_t port);
    std::size_t release_all(AppId app);
    PortmapView portmap_view() const noexcept { return PortmapView(portmap_); }

    Ipv4Addr ip_alloc();
    void ip_free(Ipv4Addr ip);
    std::size_t ip_allocated_count() const;

    /// Starts a new server generation with one handler per Server-mode app.
    /// Throws AlreadyRunning while the previous generation has not halted.
    /// With a pool the serving loop runs as a task; without one the caller
    /// drives it through poll_once().
    std::shared_ptr<NetServer> server_start(sched::WorkerPool* pool = nullptr);
    /// Fault injection into the live server; no-op when none is running.
    void server_crash();
    std::shared_ptr<NetServer> server() const;
    std::uint64_t server_epoch() const;

    /// Portmap, app records, IP pool and id counter as length-prefixed records.
    /// Server generation is excluded, so the bytes do not change across server
    /// crash/restart cycles.
    std::vector<std::uint8_t> registry_snapshot() const;
    /// Replaces registry state. Records whose id matches a live app keep their
    /// live handles; others are restored detached. Throws CorruptSnapshot.
    void registry_restore(std::span<const std::uint8_t> bytes);

  private:
    friend SwitchPlan switch_to_direct(Supervisor& sup, AppId app);
    friend SwitchPlan switch_to_server(Supervisor& sup, AppId app);

    AppRecord& record_locked(AppId id);
    HandlerSpec handler_spec_locked(const AppRecord& r) const;

    Medium& medium_;
    const SupervisorConfig config_;
    mutable std::recursive_mutex mu_;
    PortmapTable portmap_;
    IpPool pool_;
    std::map<AppId, AppRecord> apps_;
    std::uint32_t next_app_id_ = 1;
    std::uint64_t epoch_ = 0;
    std::shared_ptr<NetServer> server_;
    std::shared_ptr<ConsumerSignal> server_signal_;
};

}  // namespace msnet
