#pragma once

#include "msnet/frame.hpp"
#include "msnet/nic.hpp"
#include "msnet/portmap.hpp"
#include "msnet/ring.hpp"
#include "msnet/sched.hpp"
#include "msnet/types.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace msnet {

/// The ring pair between one application and the network server. It belongs
/// to the application record, not to a server instance, so it outlives server
/// crashes. app_tx/app_rx are the application's ends, server_tx/server_rx the
/// server's.
struct ServerLink {
    ServerLink(AppId app, std::size_t capacity, std::shared_ptr<ConsumerSignal> server_signal,
               std::shared_ptr<ConsumerSignal> app_signal);

    AppId app;
    FrameProducer app_tx;
    FrameConsumer server_tx;
    FrameProducer server_rx;
    FrameConsumer app_rx;
    /// Frames this link's traffic was handed from the server to the medium.
    std::atomic<std::uint64_t> server_handoffs{0};
};

struct HandlerSpec {
    AppId app;
    MacAddr expected_mac;
    Ipv4Addr expected_ip;
    std::shared_ptr<ServerLink> link;
};

struct HandlerCounters {
    AppId app;
    std::uint64_t forwarded = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_spoof = 0;
    std::uint64_t dropped_full = 0;
};

struct ServerStats {
    std::uint64_t epoch = 0;
    bool alive = false;
    std::size_t handlers = 0;
    std::uint64_t forwarded = 0;
    std::uint64_t delivered = 0;
    std::uint64_t dropped_spoof = 0;
    std::uint64_t dropped_noroute = 0;
    std::uint64_t dropped_full = 0;
    std::vector<HandlerCounters> per_handler;
};

/// One generation of the network server. It owns only soft state: handlers
/// built from the supervisor's registry plus counters. Rings, portmap and
/// medium live elsewhere and survive crash().
class NetServer {
  public:
    /// Claims the PF; throws AlreadyRunning if another instance holds it.
    NetServer(Medium& medium, PortmapView portmap, std::uint64_t epoch,
              std::vector<HandlerSpec> handlers);
    NetServer(const NetServer&) = delete;
    NetServer& operator=(const NetServer&) = delete;
    ~NetServer();

    /// Runs the serving loop as a task of pool.
    void attach(sched::WorkerPool& pool);

    /// Verify-and-forward one outbound frame of a handler. Serving context only.
    void serve_outbound(AppId app, Frame frame);
    /// Route one frame received on the uplink. Serving context only.
    void route_inbound(Frame frame);

    /// One drain pass over the mailbox, every handler tx ring and the uplink rx
    /// queue, each bounded by budget. Returns frames handled. Serving context
    /// only; tests drive a detached server with it.
    std::size_t poll_once(std::size_t budget = 64);
    bool has_pending() const;

    /// Handler changes are queued and applied by the serving context.
    void add_handler(HandlerSpec spec);
    void remove_handler(AppId app);

    /// Halts the serving loop at the next frame boundary. Handler state is
    /// discarded; the PF is released once the loop has stopped.
    void crash();
    bool alive() const noexcept { return alive_.load(std::memory_order_acquire); }
    /// True once the loop has stopped and the PF is released.
    bool halted() const noexcept { return halted_.load(std::memory_order_acquire); }

    std::uint64_t epoch() const noexcept { return epoch_; }
    std::optional<sched::TaskId> task() const noexcept { return task_; }
    ServerStats stats() const;

  private:
    struct Handler {
        explicit Handler(HandlerSpec s) : spec(std::move(s)) {}
        HandlerSpec spec;
        std::atomic<std::uint64_t> forwarded{0};
        std::atomic<std::uint64_t> delivered{0};
        std::atomic<std::uint64_t> dropped_spoof{0};
        std::atomic<std::uint64_t> dropped_full{0};
    };
    struct MailboxOp {
        bool add;
        HandlerSpec spec;
    };

    sched::Task loop();
    void apply_mailbox();
    void halt();
    Handler* find(AppId app) const;

    Medium& medium_;
    PortmapView portmap_;
    std::shared_ptr<NicDevice> pf_;
    std::shared_ptr<ConsumerSignal> signal_;
    const std::uint64_t epoch_;

    mutable std::mutex handlers_mu_;  // guards the vector shape for stats readers
    std::vector<std::unique_ptr<Handler>> handlers_;

    std::mutex mailbox_mu_;
    std::vector<MailboxOp> mailbox_;
    std::atomic<bool> mailbox_pending_{false};

    std::atomic<bool> alive_{true};
    std::atomic<bool> halted_{false};
    sched::WorkerPool* pool_ = nullptr;
    std::optional<sched::TaskId> task_;

    std::atomic<std::uint64_t> dropped_noroute_{0};
    std::atomic<std::uint64_t> retired_forwarded_{0};
    std::atomic<std::uint64_t> retired_delivered_{0};
    std::atomic<std::uint64_t> retired_spoof_{0};
    std::atomic<std::uint64_t> retired_full_{0};
};

}  // namespace msnet
