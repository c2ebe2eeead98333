#pragma once

#include "msnet/clock.hpp"
#include "msnet/frame.hpp"
#include "msnet/netserver.hpp"
#include "msnet/nic.hpp"
#include "msnet/ring.hpp"
#include "msnet/types.hpp"

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace msnet {

class Supervisor;

/// Where a Vif currently sends: the server ring pair or a device of its own.
struct VifRoute {
    Mode mode = Mode::Server;
    std::shared_ptr<ServerLink> link;
    std::shared_ptr<NicDevice> device;
    MacAddr mac;
};

/// The application's network interface. Its IP never changes; its route is
/// switched underneath it. Output and input run in the app's own context;
/// retarget() may be called from anywhere.
class Vif {
  public:
    Vif(AppId app, Ipv4Addr ip, Medium& medium, VifRoute route);

    AppId app() const noexcept { return app_; }
    Ipv4Addr ip() const noexcept { return ip_; }
    Mode mode() const;
    MacAddr mac() const;
    VifRoute route() const;

    /// Swaps the route. A device being replaced keeps being drained until it
    /// is detached and empty, so frames already delivered to it are not lost.
    void retarget(VifRoute route);

    /// Server mode pushes onto the server tx ring (Full is backpressure);
    /// Direct mode transmits on the device. The frame is not modified.
    PushResult output(Frame frame);

    /// Hands up to budget received frames to sink, from the server rx ring,
    /// the current device and any retired device.
    std::size_t poll_input(const std::function<void(Frame&&)>& sink, std::size_t budget);
    bool has_input() const;

    std::uint64_t frames_out() const noexcept { return frames_out_.load(std::memory_order_relaxed); }
    /// Handoffs performed by the Vif itself: one per frame on either path.
    std::uint64_t handoffs() const noexcept { return handoffs_.load(std::memory_order_relaxed); }
    std::uint64_t retargets() const noexcept { return retargets_.load(std::memory_order_relaxed); }

  private:
    const AppId app_;
    const Ipv4Addr ip_;
    Medium& medium_;
    mutable std::mutex mu_;
    VifRoute route_;
    std::shared_ptr<ServerLink> input_link_;
    std::vector<std::shared_ptr<NicDevice>> retired_;
    std::atomic<std::uint64_t> frames_out_{0};
    std::atomic<std::uint64_t> handoffs_{0};
    std::atomic<std::uint64_t> retargets_{0};
};

/// Source of port bindings for a stack: the supervisor for managed
/// applications, a private table for peers outside this machine.
class PortBinder {
  public:
    virtual ~PortBinder() = default;
    virtual std::uint16_t bind(Proto proto, std::uint16_t port) = 0;
    virtual void release(Proto proto, std::uint16_t port) = 0;
};

class SupervisorBinder final : public PortBinder {
  public:
    SupervisorBinder(Supervisor& sup, AppId app) : sup_(sup), app_(app) {}
    std::uint16_t bind(Proto proto, std::uint16_t port) override;
    void release(Proto proto, std::uint16_t port) override;

  private:
    Supervisor& sup_;
    AppId app_;
};

class LocalPortBinder final : public PortBinder {
  public:
    explicit LocalPortBinder(PortRange range = {}) : range_(range) {}
    std::uint16_t bind(Proto proto, std::uint16_t port) override;
    void release(Proto proto, std::uint16_t port) override;

  private:
    PortRange range_;
    std::set<std::uint16_t> used_[2];
};

struct StackConfig {
    /// Send window in segments.
    std::uint32_t window = 64;
    Nanos rto_base = std::chrono::milliseconds(20);
    std::uint32_t rto_factor = 2;
    std::uint32_t max_retries = 10;
    std::size_t mtu_frame = kDefaultMtuFrame;
    std::size_t sndbuf = std::size_t{4} << 20;
    std::size_t rcvbuf = std::size_t{4} << 20;
    std::size_t udp_queue = 1024;
    /// Retry delay after the server ring pushed back.
    Nanos backpressure_retry = std::chrono::microseconds(50);
    /// How long a closed connection keeps its local port. Frames already queued
    /// towards the network server still need the binding to pass its checks.
    Nanos time_wait = std::chrono::milliseconds(10);
    std::uint32_t iss_seed = 1;
};

enum class SockState : std::uint8_t {
    Closed,
    Bound,
    Listening,
    SynSent,
    SynReceived,
    Established,
    Closing,
};

std::string_view sock_state_name(SockState s) noexcept;

enum class IoStatus : std::uint8_t { Ok, WouldBlock, Eof, Reset };

struct IoResult {
    IoStatus status = IoStatus::Ok;
    std::size_t bytes = 0;
};

struct SocketId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(SocketId, SocketId) = default;
};

struct Datagram {
    Ipv4Addr src_ip;
    std::uint16_t src_port = 0;
    std::vector<std::uint8_t> data;
};

struct StackCounters {
    std::uint64_t frames_in = 0;
    std::uint64_t frames_out = 0;
    std::uint64_t segments_sent = 0;
    std::uint64_t retransmits = 0;
    std::uint64_t acks_sent = 0;
    std::uint64_t dropped_unresolved = 0;
    std::uint64_t dropped_backpressure = 0;
    std::uint64_t dropped_no_socket = 0;
    std::uint64_t dropped_out_of_order = 0;
    std::uint64_t dropped_rcvbuf = 0;
    std::uint64_t stateless_acks = 0;
    std::uint64_t socket_errors = 0;
};

/// One application's TCP-lite/UDP stack. Single-threaded: every call,
/// including poll(), must come from the application's own context. The socket
/// API never blocks; callers poll.
class AppStack {
  public:
    AppStack(std::shared_ptr<Vif> vif, Medium& medium, const Clock& clock, PortBinder& binder,
             StackConfig config = {});
    AppStack(const AppStack&) = delete;
    AppStack& operator=(const AppStack&) = delete;
    ~AppStack();

    Vif& vif() noexcept { return *vif_; }
    const Vif& vif() const noexcept { return *vif_; }
    std::size_t mss() const noexcept { return mss_; }
    const StackConfig& config() const noexcept { return config_; }

    SocketId socket(Proto proto);
    /// Port 0 picks a dynamic port. Throws PortInUse, Exhausted, BadState.
    std::uint16_t bind(SocketId s, std::uint16_t port);
    void listen(SocketId s);
    std::optional<SocketId> accept(SocketId listener);
    /// Starts the handshake; completion or ConnectTimeout shows in state() and
    /// error().
    void connect(SocketId s, Ipv4Addr ip, std::uint16_t port);
    IoResult send(SocketId s, std::span<const std::uint8_t> data);
    IoResult recv(SocketId s, std::span<std::uint8_t> out);
    /// Graceful for connections (FIN after queued data), immediate otherwise.
    void close(SocketId s);

    IoResult sendto(SocketId s, Ipv4Addr ip, std::uint16_t port, std::span<const std::uint8_t> data);
    std::optional<Datagram> recvfrom(SocketId s);

    SockState state(SocketId s) const;
    std::optional<Errc> error(SocketId s) const;
    std::uint16_t local_port(SocketId s) const;
    /// Bytes accepted by send() and not yet acknowledged.
    std::size_t unacked_bytes(SocketId s) const;
    std::size_t readable_bytes(SocketId s) const;

    /// Processes input, expired timers and pending output. Returns a work
    /// count; zero means nothing happened.
    std::size_t poll(Nanos now);
    /// Earliest retransmission or backpressure retry deadline.
    std::optional<Nanos> next_deadline() const;
    bool has_input() const { return vif_->has_input(); }

    StackCounters counters() const noexcept { return counters_; }

  private:
    struct Socket;
    struct ConnKey {
        std::uint16_t lport;
        std::uint32_t rip;
        std::uint16_t rport;
        friend auto operator<=>(const ConnKey&, const ConnKey&) = default;
    };

    Socket& sock(SocketId s);
    const Socket& sock(SocketId s) const;
    void input(Frame&& frame, Nanos now);
    void input_tcp(const TcpView& v, Nanos now);
    void input_udp(const UdpView& v);
    void on_ack(Socket& s, std::uint32_t ack, Nanos now);
    void on_data(Socket& s, const TcpView& v);
    void on_timeout(Socket& s, Nanos now);
    std::size_t pump(Socket& s, Nanos now);
    bool emit(Socket& s, std::uint8_t flags, std::uint32_t seq, std::span<const std::uint8_t> data);
    bool emit_raw(Ipv4Addr dst, const FlowKey& flow, const TcpLiteHeader& h,
                  std::span<const std::uint8_t> data);
    void fail(Socket& s, Errc why);
    void finish(Socket& s);
    void release_port(Socket& s);
    void established(Socket& s);

    std::shared_ptr<Vif> vif_;
    Medium& medium_;
    const Clock& clock_;
    PortBinder& binder_;
    const StackConfig config_;
    const std::size_t mss_;
    std::map<SocketId, std::unique_ptr<Socket>> sockets_;
    std::set<SocketId> active_;
    std::map<ConnKey, SocketId> conns_;
    std::map<std::uint16_t, SocketId> tcp_listeners_;
    std::map<std::uint16_t, SocketId> udp_ports_;
    std::set<std::pair<Proto, std::uint16_t>> local_ports_;
    std::uint32_t next_socket_ = 1;
    std::uint32_t next_iss_;
    std::optional<Nanos> retry_at_;
    StackCounters counters_;
};

struct AppHandle {
    AppId id;
    std::string name;
    Mode mode = Mode::Server;
    bool fell_back = false;
    std::shared_ptr<Vif> vif;
    std::shared_ptr<ConsumerSignal> signal;
    std::unique_ptr<SupervisorBinder> binder;
};

/// Registers an application with the supervisor and builds its Vif.
AppHandle app_register(Supervisor& sup, const std::string& name, Mode mode,
                       bool fallback_to_server = false);

/// A machine elsewhere on the wire: its own device, IP and port space.
struct ExternalHost {
    std::shared_ptr<NicDevice> device;
    std::shared_ptr<Vif> vif;
    std::shared_ptr<ConsumerSignal> signal;
    std::unique_ptr<LocalPortBinder> binder;
};

ExternalHost external_attach(Medium& medium, Ipv4Addr ip);

}  // namespace msnet
