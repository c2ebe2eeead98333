#include "msnet/workload.hpp"

#include "msnet/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <sstream>

namespace msnet {

void fill_pattern(std::span<std::uint8_t> out, std::uint64_t offset) noexcept
{
    std::size_t i = 0;
    // Byte-wise up to a word boundary, then a whole word per multiply.
    for (; i < out.size() && ((offset + i) & 7) != 0; ++i)
        out[i] = pattern_byte(offset + i);
    for (; i + 8 <= out.size(); i += 8) {
        std::uint64_t h = (((offset + i) >> 3) + 1) * 0x9E3779B97F4A7C15ull;
        h ^= h >> 29;
        for (int b = 0; b < 8; ++b)
            out[i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(h >> (8 * b));
    }
    for (; i < out.size(); ++i)
        out[i] = pattern_byte(offset + i);
}

std::uint64_t count_pattern_mismatches(std::span<const std::uint8_t> data, std::uint64_t offset)
{
    thread_local std::vector<std::uint8_t> expect;
    expect.resize(data.size());
    fill_pattern(expect, offset);
    if (std::memcmp(expect.data(), data.data(), data.size()) == 0)
        return 0;
    std::uint64_t bad = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        bad += data[i] != expect[i];
    return bad;
}

namespace {

void fill_pattern(std::vector<std::uint8_t>& out, std::uint64_t offset, std::size_t n)
{
    out.resize(n);
    msnet::fill_pattern(std::span<std::uint8_t>(out), offset);
}

// Upper bound on bytes read per connection per poll, so one busy connection
// cannot starve the loop.
constexpr std::size_t kReadBudget = std::size_t{1} << 20;

}  // namespace

// ------------------------------------------------------------------ sink

void SinkWorkload::start(AppStack& stack, Nanos)
{
    listener_ = stack.socket(Proto::Tcp);
    stack.bind(listener_, port_);
    stack.listen(listener_);
}

std::size_t SinkWorkload::poll(AppStack& stack, Nanos)
{
    std::size_t work = 0;
    while (auto c = stack.accept(listener_)) {
        conns_.push_back(Conn{*c});
        connections_.fetch_add(1, std::memory_order_relaxed);
        ++work;
    }
    for (auto& c : conns_) {
        std::size_t budget = kReadBudget;
        while (!c.closed && budget > 0) {
            const auto r = stack.recv(c.sock, buf_);
            if (r.status == IoStatus::Ok) {
                if (verify_) {
                    const auto bad =
                        count_pattern_mismatches(std::span(buf_).first(r.bytes), c.offset);
                    if (bad)
                        mismatches_.fetch_add(bad, std::memory_order_relaxed);
                }
                c.offset += r.bytes;
                budget -= std::min(budget, r.bytes);
                const auto total = rx_.fetch_add(r.bytes, std::memory_order_relaxed) + r.bytes;
                ++work;
                if (hook_)
                    hook_(total);
                continue;
            }
            if (r.status == IoStatus::Eof) {
                stack.close(c.sock);
                c.closed = true;
                completed_.fetch_add(1, std::memory_order_relaxed);
                ++work;
            } else if (r.status == IoStatus::Reset) {
                c.closed = true;
                errors_.fetch_add(1, std::memory_order_relaxed);
                ++work;
            }
            break;
        }
    }
    return work;
}

WorkloadStats SinkWorkload::stats() const
{
    WorkloadStats s;
    s.rx_bytes = rx_.load(std::memory_order_relaxed);
    s.errors = errors_.load(std::memory_order_relaxed);
    s.mismatches = mismatches_.load(std::memory_order_relaxed);
    s.connections = connections_.load(std::memory_order_relaxed);
    s.completed = completed_.load(std::memory_order_relaxed);
    return s;
}

// ------------------------------------------------------------------ echo

void EchoWorkload::start(AppStack& stack, Nanos)
{
    listener_ = stack.socket(Proto::Tcp);
    stack.bind(listener_, port_);
    stack.listen(listener_);
}

std::size_t EchoWorkload::poll(AppStack& stack, Nanos)
{
    std::size_t work = 0;
    while (auto c = stack.accept(listener_)) {
        conns_.push_back(Conn{*c, {}, 0, false});
        connections_.fetch_add(1, std::memory_order_relaxed);
        ++work;
    }
    for (auto& c : conns_) {
        if (c.closed)
            continue;
        bool eof = false;
        for (std::size_t budget = kReadBudget; budget > 0;) {
            const auto r = stack.recv(c.sock, buf_);
            if (r.status == IoStatus::Ok) {
                c.pending.insert(c.pending.end(), buf_.begin(),
                                 buf_.begin() + static_cast<std::ptrdiff_t>(r.bytes));
                rx_.fetch_add(r.bytes, std::memory_order_relaxed);
                budget -= std::min(budget, r.bytes);
                ++work;
                continue;
            }
            if (r.status == IoStatus::Eof)
                eof = true;
            if (r.status == IoStatus::Reset) {
                errors_.fetch_add(1, std::memory_order_relaxed);
                c.closed = true;
            }
            break;
        }
        if (c.closed)
            continue;
        if (c.head < c.pending.size()) {
            const auto w = stack.send(c.sock, std::span<const std::uint8_t>(c.pending).subspan(c.head));
            if (w.status == IoStatus::Ok) {
                c.head += w.bytes;
                if (c.head == c.pending.size()) {
                    c.pending.clear();
                    c.head = 0;
                }
                tx_.fetch_add(w.bytes, std::memory_order_relaxed);
                ++work;
            } else if (w.status == IoStatus::Reset) {
                errors_.fetch_add(1, std::memory_order_relaxed);
                c.closed = true;
                continue;
            }
        }
        if (eof && c.head == c.pending.size()) {
            stack.close(c.sock);
            c.closed = true;
            ++work;
        }
    }
    return work;
}

WorkloadStats EchoWorkload::stats() const
{
    WorkloadStats s;
    s.rx_bytes = rx_.load(std::memory_order_relaxed);
    s.tx_bytes = tx_.load(std::memory_order_relaxed);
    s.errors = errors_.load(std::memory_order_relaxed);
    s.connections = connections_.load(std::memory_order_relaxed);
    return s;
}

// ------------------------------------------------------------------ bulk

void BulkWorkload::start(AppStack& stack, Nanos)
{
    sock_ = stack.socket(Proto::Tcp);
    stack.connect(sock_, peer_, port_);
}

std::size_t BulkWorkload::poll(AppStack& stack, Nanos)
{
    if (done_.load(std::memory_order_relaxed))
        return 0;
    if (stack.error(sock_)) {
        errors_.fetch_add(1, std::memory_order_relaxed);
        done_.store(true, std::memory_order_release);
        return 1;
    }
    std::size_t work = 0;
    const auto st = stack.state(sock_);
    if (!closed_ && (st == SockState::Established || st == SockState::SynSent)) {
        while (total_ == 0 || queued_ < total_) {
            constexpr std::uint64_t kChunk = 1 << 16;
            if (queued_ < chunk_base_ || queued_ >= chunk_base_ + chunk_.size()) {
                chunk_base_ = queued_;
                fill_pattern(chunk_, chunk_base_, kChunk);
            }
            std::uint64_t n = chunk_base_ + chunk_.size() - queued_;
            if (total_)
                n = std::min(n, total_ - queued_);
            const auto r = stack.send(
                sock_, std::span(chunk_).subspan(static_cast<std::size_t>(queued_ - chunk_base_),
                                                 static_cast<std::size_t>(n)));
            if (r.status != IoStatus::Ok || r.bytes == 0)
                break;
            queued_ += r.bytes;
            ++work;
        }
    }
    const auto acked = queued_ - stack.unacked_bytes(sock_);
    if (acked != acked_.load(std::memory_order_relaxed)) {
        acked_.store(acked, std::memory_order_relaxed);
        ++work;
    }
    // Closing before the handshake completes would abort the connection.
    if (total_ && queued_ == total_ && !closed_ && stack.state(sock_) == SockState::Established) {
        stack.close(sock_);
        closed_ = true;
        ++work;
    }
    if (closed_ && stack.state(sock_) == SockState::Closed) {
        done_.store(true, std::memory_order_release);
        ++work;
    }
    return work;
}

WorkloadStats BulkWorkload::stats() const
{
    WorkloadStats s;
    s.tx_bytes = acked_.load(std::memory_order_relaxed);
    s.errors = errors_.load(std::memory_order_relaxed);
    s.completed = done_.load(std::memory_order_acquire) && s.errors == 0 ? 1 : 0;
    return s;
}

// -------------------------------------------------------------- pingpong

void PingPongWorkload::start(AppStack& stack, Nanos)
{
    if (count_ == 0 || size_ == 0) {
        done_.store(true, std::memory_order_release);
        return;
    }
    fill_pattern(out_, 0, size_);
    in_.resize(std::min<std::size_t>(size_, 64 * 1024));
    sock_ = stack.socket(Proto::Tcp);
    stack.connect(sock_, peer_, port_);
}

std::size_t PingPongWorkload::poll(AppStack& stack, Nanos now)
{
    if (done_.load(std::memory_order_relaxed))
        return 0;
    if (stack.error(sock_)) {
        errors_.fetch_add(1, std::memory_order_relaxed);
        done_.store(true, std::memory_order_release);
        return 1;
    }
    std::size_t work = 0;
    if (!connected_) {
        if (stack.state(sock_) != SockState::Established)
            return 0;
        connected_ = true;
        first_send_ = now;
        to_send_ = to_recv_ = size_;
        ++work;
    }
    if (to_send_ > 0) {
        const auto r = stack.send(sock_, std::span(out_).subspan(size_ - to_send_));
        if (r.status == IoStatus::Ok) {
            to_send_ -= r.bytes;
            tx_.fetch_add(r.bytes, std::memory_order_relaxed);
            ++work;
        }
    }
    while (to_recv_ > 0) {
        const auto r = stack.recv(sock_, std::span(in_).first(std::min(in_.size(), to_recv_)));
        if (r.status != IoStatus::Ok)
            break;
        to_recv_ -= r.bytes;
        rx_.fetch_add(r.bytes, std::memory_order_relaxed);
        ++work;
    }
    if (to_send_ == 0 && to_recv_ == 0) {
        const auto n = exchanges_.fetch_add(1, std::memory_order_acq_rel) + 1;
        if (n == count_) {
            elapsed_.store((now - first_send_).count(), std::memory_order_release);
            stack.close(sock_);
            done_.store(true, std::memory_order_release);
        } else {
            to_send_ = to_recv_ = size_;
        }
        ++work;
    }
    return work;
}

WorkloadStats PingPongWorkload::stats() const
{
    WorkloadStats s;
    s.rx_bytes = rx_.load(std::memory_order_relaxed);
    s.tx_bytes = tx_.load(std::memory_order_relaxed);
    s.errors = errors_.load(std::memory_order_relaxed);
    s.completed = exchanges_.load(std::memory_order_relaxed);
    return s;
}

// ------------------------------------------------------------------ specs

WorkloadSpec parse_workload_spec(const std::string& text)
{
    std::istringstream in(text);
    WorkloadSpec spec;
    if (!(in >> spec.kind))
        throw Error(Errc::InvalidArgument, "empty workload");
    std::string tok;
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos || eq == 0)
            throw Error(Errc::InvalidArgument, "workload parameter '" + tok + "' is not key=value");
        if (!spec.params.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second)
            throw Error(Errc::InvalidArgument, "workload parameter '" + tok.substr(0, eq) + "' given twice");
    }
    return spec;
}

namespace {

std::uint64_t number(const WorkloadSpec& spec, const std::string& key,
                     std::optional<std::uint64_t> fallback = std::nullopt)
{
    auto it = spec.params.find(key);
    if (it == spec.params.end()) {
        if (fallback)
            return *fallback;
        throw Error(Errc::InvalidArgument, spec.kind + " needs " + key + "=");
    }
    std::uint64_t v = 0;
    const auto& s = it->second;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw Error(Errc::InvalidArgument, key + "=" + s + " is not a number");
    return v;
}

std::uint16_t port_param(const WorkloadSpec& spec)
{
    const auto p = number(spec, "port");
    if (p == 0 || p > 65535)
        throw Error(Errc::InvalidArgument, "port out of range");
    return static_cast<std::uint16_t>(p);
}

std::string text(const WorkloadSpec& spec, const std::string& key)
{
    auto it = spec.params.find(key);
    if (it == spec.params.end())
        throw Error(Errc::InvalidArgument, spec.kind + " needs " + key + "=");
    return it->second;
}

void allow_only(const WorkloadSpec& spec, std::initializer_list<std::string_view> keys)
{
    for (const auto& [k, v] : spec.params)
        if (std::find(keys.begin(), keys.end(), k) == keys.end())
            throw Error(Errc::InvalidArgument, "unknown " + spec.kind + " parameter '" + k + "'");
}

}  // namespace

std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec,
                                        const std::function<Ipv4Addr(const std::string&)>& resolve)
{
    if (spec.kind == "sink") {
        allow_only(spec, {"port", "verify"});
        return std::make_unique<SinkWorkload>(port_param(spec), number(spec, "verify", 1) != 0);
    }
    if (spec.kind == "echo") {
        allow_only(spec, {"port"});
        return std::make_unique<EchoWorkload>(port_param(spec));
    }
    if (spec.kind == "bulk") {
        allow_only(spec, {"peer", "port", "bytes"});
        return std::make_unique<BulkWorkload>(resolve(text(spec, "peer")), port_param(spec),
                                              number(spec, "bytes"));
    }
    if (spec.kind == "stream") {
        allow_only(spec, {"peer", "port"});
        return std::make_unique<BulkWorkload>(resolve(text(spec, "peer")), port_param(spec), 0);
    }
    if (spec.kind == "pingpong") {
        allow_only(spec, {"peer", "port", "size", "count"});
        return std::make_unique<PingPongWorkload>(resolve(text(spec, "peer")), port_param(spec),
                                                  number(spec, "size"), number(spec, "count"));
    }
    throw Error(Errc::InvalidArgument, "unknown workload kind '" + spec.kind + "'");
}

}  // namespace msnet
