#include "msnet/appnet.hpp"

#include "msnet/error.hpp"

#include <algorithm>
#include <cstring>

namespace msnet {

namespace {

bool seq_lt(std::uint32_t a, std::uint32_t b) noexcept
{
    return static_cast<std::int32_t>(a - b) < 0;
}
bool seq_le(std::uint32_t a, std::uint32_t b) noexcept
{
    return static_cast<std::int32_t>(a - b) <= 0;
}

// Byte FIFO over a vector; consumed space is reclaimed once it is at least
// half the buffer.
class ByteQueue {
  public:
    std::size_t size() const noexcept { return buf_.size() - head_; }

    void append(std::span<const std::uint8_t> data)
    {
        if (head_ > 0 && head_ >= buf_.size() / 2) {
            buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
            head_ = 0;
        }
        buf_.insert(buf_.end(), data.begin(), data.end());
    }

    std::span<const std::uint8_t> view(std::size_t offset, std::size_t len) const noexcept
    {
        return {buf_.data() + head_ + offset, len};
    }

    void consume(std::size_t n) noexcept
    {
        head_ += n;
        if (head_ == buf_.size()) {
            buf_.clear();
            head_ = 0;
        }
    }

  private:
    std::vector<std::uint8_t> buf_;
    std::size_t head_ = 0;
};

}  // namespace

std::string_view sock_state_name(SockState s) noexcept
{
    switch (s) {
    case SockState::Closed: return "closed";
    case SockState::Bound: return "bound";
    case SockState::Listening: return "listening";
    case SockState::SynSent: return "syn-sent";
    case SockState::SynReceived: return "syn-received";
    case SockState::Established: return "established";
    case SockState::Closing: return "closing";
    }
    return "?";
}

struct AppStack::Socket {
    SocketId id;
    Proto proto = Proto::Tcp;
    SockState state = SockState::Closed;
    std::uint16_t lport = 0;
    bool owns_port = false;
    Ipv4Addr rip;
    std::uint16_t rport = 0;
    bool connected = false;  // present in conns_

    std::uint32_t iss = 0;
    std::uint32_t snd_una = 0;
    std::uint32_t snd_nxt = 0;
    std::uint32_t snd_max = 0;
    std::uint32_t rcv_nxt = 0;
    ByteQueue sndq;
    ByteQueue rcvq;
    bool fin_requested = false;
    bool fin_sent = false;
    bool fin_seq_valid = false;
    bool fin_acked = false;
    bool peer_fin = false;
    std::uint32_t fin_seq = 0;
    bool ack_pending = false;
    bool ctl_pending = false;
    Nanos rto{0};
    std::uint32_t retries = 0;
    std::optional<Nanos> rto_at;
    std::optional<Nanos> linger_until;
    std::optional<Errc> err;
    std::optional<SocketId> listener;
    std::deque<SocketId> accept_q;
    std::deque<Datagram> dgrams;
};

AppStack::AppStack(std::shared_ptr<Vif> vif, Medium& medium, const Clock& clock,
                   PortBinder& binder, StackConfig config)
    : vif_(std::move(vif))
    , medium_(medium)
    , clock_(clock)
    , binder_(binder)
    , config_(config)
    , mss_(config.mtu_frame - kEthHeaderLen - kIpv4HeaderLen - kTcpHeaderLen)
    , next_iss_(config.iss_seed * 0x01000193u)
{
    if (config.mtu_frame <= kEthHeaderLen + kIpv4HeaderLen + kTcpHeaderLen || config.window == 0)
        throw Error(Errc::InvalidArgument, "bad stack configuration");
}

AppStack::~AppStack() = default;

AppStack::Socket& AppStack::sock(SocketId s)
{
    auto it = sockets_.find(s);
    if (it == sockets_.end())
        throw Error(Errc::InvalidArgument, "unknown socket " + std::to_string(s.value));
    return *it->second;
}

const AppStack::Socket& AppStack::sock(SocketId s) const
{
    auto it = sockets_.find(s);
    if (it == sockets_.end())
        throw Error(Errc::InvalidArgument, "unknown socket " + std::to_string(s.value));
    return *it->second;
}

SocketId AppStack::socket(Proto proto)
{
    const SocketId id{next_socket_++};
    auto s = std::make_unique<Socket>();
    s->id = id;
    s->proto = proto;
    s->rto = config_.rto_base;
    sockets_.emplace(id, std::move(s));
    return id;
}

std::uint16_t AppStack::bind(SocketId id, std::uint16_t port)
{
    Socket& s = sock(id);
    if (s.state != SockState::Closed || s.owns_port)
        throw Error(Errc::BadState, "bind on socket in state " +
                                        std::string(sock_state_name(s.state)));
    if (port != 0 && local_ports_.contains({s.proto, port}))
        throw Error(Errc::PortInUse, std::string(proto_name(s.proto)) + "/" + std::to_string(port));
    const auto bound = binder_.bind(s.proto, port);
    local_ports_.insert({s.proto, bound});
    s.lport = bound;
    s.owns_port = true;
    s.state = SockState::Bound;
    if (s.proto == Proto::Udp)
        udp_ports_[bound] = id;
    return bound;
}

void AppStack::listen(SocketId id)
{
    Socket& s = sock(id);
    if (s.proto != Proto::Tcp || s.state != SockState::Bound)
        throw Error(Errc::BadState, "listen requires a bound TCP socket");
    s.state = SockState::Listening;
    tcp_listeners_[s.lport] = id;
}

std::optional<SocketId> AppStack::accept(SocketId listener)
{
    Socket& l = sock(listener);
    if (l.state != SockState::Listening)
        throw Error(Errc::BadState, "accept on a socket that is not listening");
    if (l.accept_q.empty())
        return std::nullopt;
    const auto child = l.accept_q.front();
    l.accept_q.pop_front();
    return child;
}

void AppStack::connect(SocketId id, Ipv4Addr ip, std::uint16_t port)
{
    Socket& s = sock(id);
    if (s.proto != Proto::Tcp || (s.state != SockState::Closed && s.state != SockState::Bound))
        throw Error(Errc::BadState, "connect on socket in state " +
                                        std::string(sock_state_name(s.state)));
    if (port == 0)
        throw Error(Errc::InvalidArgument, "connect to port 0");
    if (s.state == SockState::Closed)
        bind(id, 0);
    const ConnKey key{s.lport, ip.to_u32(), port};
    if (conns_.contains(key))
        throw Error(Errc::PortInUse, "connection already exists");
    s.rip = ip;
    s.rport = port;
    s.iss = next_iss_;
    next_iss_ += 0x00100000u;
    s.snd_una = s.snd_nxt = s.snd_max = s.iss;
    s.state = SockState::SynSent;
    s.ctl_pending = true;
    s.rto = config_.rto_base;
    s.retries = 0;
    conns_.emplace(key, id);
    s.connected = true;
    active_.insert(id);
}

IoResult AppStack::send(SocketId id, std::span<const std::uint8_t> data)
{
    Socket& s = sock(id);
    if (s.proto != Proto::Tcp)
        throw Error(Errc::BadState, "send on a UDP socket");
    const bool open = s.state == SockState::Established || s.state == SockState::SynSent ||
                      s.state == SockState::SynReceived;
    if (!open || s.fin_requested)
        return {IoStatus::Reset, 0};
    const auto room = config_.sndbuf - std::min(config_.sndbuf, s.sndq.size());
    const auto n = std::min(room, data.size());
    if (n == 0)
        return {IoStatus::WouldBlock, 0};
    s.sndq.append(data.first(n));
    return {IoStatus::Ok, n};
}

IoResult AppStack::recv(SocketId id, std::span<std::uint8_t> out)
{
    Socket& s = sock(id);
    if (s.proto != Proto::Tcp)
        throw Error(Errc::BadState, "recv on a UDP socket");
    if (const auto avail = s.rcvq.size(); avail > 0) {
        const auto n = std::min(avail, out.size());
        const auto v = s.rcvq.view(0, n);
        std::memcpy(out.data(), v.data(), n);
        s.rcvq.consume(n);
        return {IoStatus::Ok, n};
    }
    if (s.peer_fin)
        return {IoStatus::Eof, 0};
    if (s.err || s.state == SockState::Closed)
        return {IoStatus::Reset, 0};
    return {IoStatus::WouldBlock, 0};
}

void AppStack::close(SocketId id)
{
    Socket& s = sock(id);
    switch (s.state) {
    case SockState::Established:
        s.fin_requested = true;
        s.state = SockState::Closing;
        break;
    case SockState::Closing:
        break;
    case SockState::Listening:
        tcp_listeners_.erase(s.lport);
        finish(s);
        break;
    default:
        finish(s);
        active_.erase(id);
        break;
    }
}

IoResult AppStack::sendto(SocketId id, Ipv4Addr ip, std::uint16_t port,
                          std::span<const std::uint8_t> data)
{
    Socket& s = sock(id);
    if (s.proto != Proto::Udp)
        throw Error(Errc::BadState, "sendto on a TCP socket");
    if (s.state == SockState::Closed)
        bind(id, 0);
    const auto mac = medium_.resolve(ip);
    if (!mac) {
        ++counters_.dropped_unresolved;
        return {IoStatus::Ok, data.size()};
    }
    const FlowKey flow{Proto::Udp, vif_->ip(), ip, s.lport, port};
    if (vif_->output(make_udp_frame(*mac, vif_->mac(), flow, data)) == PushResult::Full) {
        ++counters_.dropped_backpressure;
        return {IoStatus::WouldBlock, 0};
    }
    ++counters_.frames_out;
    return {IoStatus::Ok, data.size()};
}

std::optional<Datagram> AppStack::recvfrom(SocketId id)
{
    Socket& s = sock(id);
    if (s.dgrams.empty())
        return std::nullopt;
    auto d = std::move(s.dgrams.front());
    s.dgrams.pop_front();
    return d;
}

SockState AppStack::state(SocketId id) const { return sock(id).state; }
std::optional<Errc> AppStack::error(SocketId id) const { return sock(id).err; }
std::uint16_t AppStack::local_port(SocketId id) const { return sock(id).lport; }
std::size_t AppStack::unacked_bytes(SocketId id) const { return sock(id).sndq.size(); }
std::size_t AppStack::readable_bytes(SocketId id) const { return sock(id).rcvq.size(); }

// --------------------------------------------------------------- engine

void AppStack::release_port(Socket& s)
{
    if (!s.owns_port)
        return;
    s.owns_port = false;
    local_ports_.erase({s.proto, s.lport});
    if (s.proto == Proto::Udp)
        udp_ports_.erase(s.lport);
    try {
        binder_.release(s.proto, s.lport);
    } catch (const Error&) {
        // The binding may already be gone, e.g. after the app was unregistered.
    }
}

void AppStack::finish(Socket& s)
{
    if (s.connected) {
        conns_.erase(ConnKey{s.lport, s.rip.to_u32(), s.rport});
        s.connected = false;
    }
    // The last frames of the connection may still be queued; poll() releases
    // the port once the linger period has passed.
    if (s.owns_port && active_.contains(s.id))
        s.linger_until = clock_.now() + config_.time_wait;
    else
        release_port(s);
    s.state = SockState::Closed;
    s.rto_at.reset();
}

void AppStack::fail(Socket& s, Errc why)
{
    const bool visible = s.state != SockState::SynReceived;
    s.err = why;
    if (visible)
        ++counters_.socket_errors;
    finish(s);
    s.ack_pending = false;
    active_.erase(s.id);
}

void AppStack::established(Socket& s)
{
    s.state = s.fin_requested ? SockState::Closing : SockState::Established;
    s.retries = 0;
    s.rto = config_.rto_base;
    s.ctl_pending = false;
    if (s.snd_nxt == s.snd_una)
        s.rto_at.reset();
}

bool AppStack::emit_raw(Ipv4Addr dst, const FlowKey& flow, const TcpLiteHeader& h,
                        std::span<const std::uint8_t> data)
{
    const auto mac = medium_.resolve(dst);
    if (!mac) {
        // Nobody holds the address right now (e.g. mid-switch): the segment is lost.
        ++counters_.dropped_unresolved;
        return true;
    }
    if (vif_->output(make_tcp_frame(*mac, vif_->mac(), flow, h, data)) == PushResult::Full) {
        ++counters_.dropped_backpressure;
        retry_at_ = clock_.now() + config_.backpressure_retry;
        return false;
    }
    ++counters_.frames_out;
    return true;
}

bool AppStack::emit(Socket& s, std::uint8_t flags, std::uint32_t seq,
                    std::span<const std::uint8_t> data)
{
    if (s.state != SockState::SynSent)
        flags |= tcp_flags::kAck;
    const FlowKey flow{Proto::Tcp, vif_->ip(), s.rip, s.lport, s.rport};
    const TcpLiteHeader h{flags, seq, (flags & tcp_flags::kAck) ? s.rcv_nxt : 0,
                          static_cast<std::uint16_t>(config_.window)};
    if (!emit_raw(s.rip, flow, h, data))
        return false;
    ++counters_.segments_sent;
    if (flags & tcp_flags::kAck)
        s.ack_pending = false;
    return true;
}

std::size_t AppStack::pump(Socket& s, Nanos now)
{
    std::size_t out = 0;
    auto arm = [&] {
        if (!s.rto_at)
            s.rto_at = now + s.rto;
    };
    switch (s.state) {
    case SockState::SynSent:
        if (s.ctl_pending && !retry_at_ && emit(s, tcp_flags::kSyn, s.iss, {})) {
            s.ctl_pending = false;
            s.snd_nxt = s.snd_max = s.iss + 1;
            arm();
            ++out;
        }
        break;
    case SockState::SynReceived:
        if (s.ctl_pending && !retry_at_ && emit(s, tcp_flags::kSyn, s.iss, {})) {
            s.ctl_pending = false;
            arm();
            ++out;
        }
        break;
    case SockState::Established:
    case SockState::Closing: {
        const std::size_t window_bytes = std::size_t{config_.window} * mss_;
        while (!retry_at_ && !s.fin_sent) {
            const std::size_t off = s.snd_nxt - s.snd_una;
            const std::size_t avail = s.sndq.size() - std::min(off, s.sndq.size());
            if (avail > 0) {
                if (off >= window_bytes)
                    break;
                const auto len = std::min({mss_, avail, window_bytes - off});
                if (!emit(s, 0, s.snd_nxt, s.sndq.view(off, len)))
                    break;
                if (seq_lt(s.snd_nxt, s.snd_max))
                    ++counters_.retransmits;
                s.snd_nxt += static_cast<std::uint32_t>(len);
                if (seq_lt(s.snd_max, s.snd_nxt))
                    s.snd_max = s.snd_nxt;
                arm();
                ++out;
                continue;
            }
            if (s.fin_requested && !s.fin_acked) {
                if (!emit(s, tcp_flags::kFin, s.snd_nxt, {}))
                    break;
                s.fin_seq = s.snd_nxt;
                s.fin_seq_valid = true;
                s.fin_sent = true;
                s.snd_nxt += 1;
                if (seq_lt(s.snd_max, s.snd_nxt))
                    s.snd_max = s.snd_nxt;
                arm();
                ++out;
            }
            break;
        }
        break;
    }
    default:
        break;
    }
    if (s.ack_pending && !retry_at_ && s.rport != 0) {
        const auto seq = s.state == SockState::Closed ? s.snd_max : s.snd_nxt;
        if (emit(s, 0, seq, {})) {
            ++counters_.acks_sent;
            ++out;
        }
    }
    return out;
}

void AppStack::on_ack(Socket& s, std::uint32_t ack, Nanos now)
{
    if (seq_le(ack, s.snd_una) || seq_lt(s.snd_max, ack))
        return;
    const std::size_t acked = ack - s.snd_una;
    s.sndq.consume(std::min(acked, s.sndq.size()));
    if (s.fin_seq_valid && ack == s.fin_seq + 1) {
        s.fin_acked = true;
        s.fin_sent = true;
    }
    s.snd_una = ack;
    if (seq_lt(s.snd_nxt, s.snd_una))
        s.snd_nxt = s.snd_una;
    s.retries = 0;
    s.rto = config_.rto_base;
    if (s.snd_una == s.snd_max)
        s.rto_at.reset();
    else
        s.rto_at = now + s.rto;
}

void AppStack::on_data(Socket& s, const TcpView& v)
{
    const auto len = v.data.size();
    const bool fin = (v.header.flags & tcp_flags::kFin) != 0;
    if (len == 0 && !fin)
        return;
    s.ack_pending = true;
    if (v.header.seq != s.rcv_nxt || s.peer_fin) {
        if (!seq_lt(v.header.seq, s.rcv_nxt))
            ++counters_.dropped_out_of_order;
        return;
    }
    if (len > 0) {
        if (s.rcvq.size() + len > config_.rcvbuf) {
            ++counters_.dropped_rcvbuf;
            return;
        }
        s.rcvq.append(v.data);
        s.rcv_nxt += static_cast<std::uint32_t>(len);
    }
    if (fin) {
        s.peer_fin = true;
        s.rcv_nxt += 1;
    }
}

void AppStack::on_timeout(Socket& s, Nanos now)
{
    if (++s.retries > config_.max_retries) {
        fail(s, s.state == SockState::SynSent ? Errc::ConnectTimeout : Errc::ConnectionReset);
        return;
    }
    s.rto *= config_.rto_factor;
    s.rto_at = now + s.rto;
    switch (s.state) {
    case SockState::SynSent:
    case SockState::SynReceived:
        s.ctl_pending = true;
        break;
    case SockState::Established:
    case SockState::Closing:
        // Go-back-N: resend everything from the oldest unacknowledged byte.
        s.snd_nxt = s.snd_una;
        if (!s.fin_acked)
            s.fin_sent = false;
        break;
    default:
        s.rto_at.reset();
        break;
    }
}

void AppStack::input_tcp(const TcpView& v, Nanos now)
{
    const auto flags = v.header.flags;
    const bool syn = flags & tcp_flags::kSyn;
    const bool ack = flags & tcp_flags::kAck;
    const ConnKey key{v.flow.dst_port, v.flow.src_ip.to_u32(), v.flow.src_port};

    if (auto it = conns_.find(key); it != conns_.end()) {
        Socket& s = sock(it->second);
        switch (s.state) {
        case SockState::SynSent:
            if (syn && ack && v.header.ack == s.iss + 1) {
                s.rcv_nxt = v.header.seq + 1;
                s.snd_una = s.iss + 1;
                if (seq_lt(s.snd_nxt, s.snd_una))
                    s.snd_nxt = s.snd_una;
                established(s);
                s.ack_pending = true;
            }
            return;
        case SockState::SynReceived:
            if (syn && !ack) {
                s.ctl_pending = true;
                return;
            }
            if (!ack || v.header.ack != s.iss + 1)
                return;
            s.snd_una = s.iss + 1;
            if (seq_lt(s.snd_nxt, s.snd_una))
                s.snd_nxt = s.snd_una;
            established(s);
            if (s.listener) {
                auto l = sockets_.find(*s.listener);
                if (l != sockets_.end() && l->second->state == SockState::Listening)
                    l->second->accept_q.push_back(s.id);
            }
            break;
        case SockState::Established:
        case SockState::Closing:
            if (syn) {
                // A repeated SYN-ACK means our handshake ACK was lost.
                s.ack_pending = true;
                return;
            }
            if (ack)
                on_ack(s, v.header.ack, now);
            break;
        default:
            return;
        }
        on_data(s, v);
        if (s.state == SockState::Closing && s.fin_acked && s.peer_fin)
            finish(s);
        return;
    }

    if (syn && !ack) {
        auto l = tcp_listeners_.find(v.flow.dst_port);
        if (l == tcp_listeners_.end()) {
            ++counters_.dropped_no_socket;
            return;
        }
        const SocketId cid = socket(Proto::Tcp);
        Socket& c = sock(cid);
        c.lport = v.flow.dst_port;
        c.rip = v.flow.src_ip;
        c.rport = v.flow.src_port;
        c.listener = l->second;
        c.iss = next_iss_;
        next_iss_ += 0x00100000u;
        c.snd_una = c.iss;
        c.snd_nxt = c.snd_max = c.iss + 1;
        c.rcv_nxt = v.header.seq + 1;
        c.state = SockState::SynReceived;
        c.ctl_pending = true;
        conns_.emplace(key, cid);
        c.connected = true;
        active_.insert(cid);
        return;
    }
    if (flags & tcp_flags::kFin) {
        // The connection is already gone; acknowledge so the peer can finish.
        const FlowKey flow{Proto::Tcp, vif_->ip(), v.flow.src_ip, v.flow.dst_port,
                           v.flow.src_port};
        const TcpLiteHeader h{tcp_flags::kAck, v.header.ack,
                              v.header.seq + static_cast<std::uint32_t>(v.data.size()) + 1,
                              static_cast<std::uint16_t>(config_.window)};
        if (emit_raw(v.flow.src_ip, flow, h, {}))
            ++counters_.stateless_acks;
        return;
    }
    ++counters_.dropped_no_socket;
}

void AppStack::input_udp(const UdpView& v)
{
    auto it = udp_ports_.find(v.flow.dst_port);
    if (it == udp_ports_.end()) {
        ++counters_.dropped_no_socket;
        return;
    }
    Socket& s = sock(it->second);
    if (s.dgrams.size() >= config_.udp_queue) {
        ++counters_.dropped_rcvbuf;
        return;
    }
    s.dgrams.push_back(Datagram{v.flow.src_ip, v.flow.src_port, {v.data.begin(), v.data.end()}});
}

void AppStack::input(Frame&& frame, Nanos now)
{
    ++counters_.frames_in;
    const auto& flow = frame.parsed();
    if (!flow || flow->dst_ip != vif_->ip()) {
        if (flow)
            ++counters_.dropped_no_socket;
        return;
    }
    if (flow->proto == Proto::Tcp) {
        if (auto v = tcp_view(frame))
            input_tcp(*v, now);
    } else if (auto v = udp_view(frame)) {
        input_udp(*v);
    }
}

std::size_t AppStack::poll(Nanos now)
{
    std::size_t work =
        vif_->poll_input([&](Frame&& f) { input(std::move(f), now); }, 512);

    std::vector<SocketId> ids(active_.begin(), active_.end());
    for (auto id : ids) {
        Socket& s = sock(id);
        if (s.rto_at && *s.rto_at <= now && active_.contains(id))
            on_timeout(s, now);
    }
    if (retry_at_ && *retry_at_ <= now)
        retry_at_.reset();
    for (auto id : ids) {
        if (!active_.contains(id))
            continue;
        Socket& s = sock(id);
        work += pump(s, now);
        if (s.state == SockState::Closed && !s.ack_pending && (!s.linger_until || *s.linger_until <= now)) {
            release_port(s);
            s.linger_until.reset();
            active_.erase(id);
        }
    }
    return work;
}

std::optional<Nanos> AppStack::next_deadline() const
{
    std::optional<Nanos> best = retry_at_;
    for (auto id : active_) {
        const Socket& s = sock(id);
        if (s.rto_at && (!best || *s.rto_at < *best))
            best = s.rto_at;
        if (s.linger_until && (!best || *s.linger_until < *best))
            best = s.linger_until;
    }
    return best;
}

}  // namespace msnet
