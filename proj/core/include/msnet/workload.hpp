#pragma once

#include "msnet/appnet.hpp"
#include "msnet/types.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msnet {

/// Byte at a given stream offset of the deterministic transfer pattern. Any
/// lost, duplicated or reordered segment shifts later bytes off the pattern.
inline std::uint8_t pattern_byte(std::uint64_t offset) noexcept
{
    std::uint64_t h = ((offset >> 3) + 1) * 0x9E3779B97F4A7C15ull;
    h ^= h >> 29;
    return static_cast<std::uint8_t>(h >> (8 * (offset & 7)));
}

/// Writes the pattern bytes for [offset, offset + out.size()).
void fill_pattern(std::span<std::uint8_t> out, std::uint64_t offset) noexcept;
/// Number of bytes of data that differ from the pattern at offset.
std::uint64_t count_pattern_mismatches(std::span<const std::uint8_t> data, std::uint64_t offset);

struct WorkloadStats {
    std::uint64_t rx_bytes = 0;
    std::uint64_t tx_bytes = 0;
    std::uint64_t errors = 0;
    std::uint64_t mismatches = 0;
    std::uint64_t connections = 0;
    std::uint64_t completed = 0;
};

/// Application logic driven from the app's loop. poll() must not block;
/// it returns how much it did so the loop can decide whether to sleep.
class Workload {
  public:
    virtual ~Workload() = default;
    virtual std::string_view kind() const noexcept = 0;
    virtual void start(AppStack& stack, Nanos now) = 0;
    virtual std::size_t poll(AppStack& stack, Nanos now) = 0;
    virtual std::optional<Nanos> next_deadline() const { return std::nullopt; }
    /// True once a finite workload has nothing left to do.
    virtual bool finished() const noexcept { return false; }
    /// Safe to call from any thread.
    virtual WorkloadStats stats() const = 0;
};

/// Passive receiver. Accepts connections on a port, reads everything, and
/// checks each byte against the pattern. Closes its side at end of stream.
class SinkWorkload final : public Workload {
  public:
    using ProgressHook = std::function<void(std::uint64_t total_rx)>;

    explicit SinkWorkload(std::uint16_t port, bool verify = true) : port_(port), verify_(verify) {}
    std::string_view kind() const noexcept override { return "sink"; }
    void start(AppStack& stack, Nanos now) override;
    std::size_t poll(AppStack& stack, Nanos now) override;
    WorkloadStats stats() const override;

    /// Runs in the app's context after every read that made progress.
    void set_progress_hook(ProgressHook hook) { hook_ = std::move(hook); }

  private:
    struct Conn {
        SocketId sock;
        std::uint64_t offset = 0;
        bool closed = false;
    };
    std::uint16_t port_;
    bool verify_;
    SocketId listener_{};
    std::vector<Conn> conns_;
    std::vector<std::uint8_t> buf_ = std::vector<std::uint8_t>(64 * 1024);
    ProgressHook hook_;
    std::atomic<std::uint64_t> rx_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::atomic<std::uint64_t> mismatches_{0};
    std::atomic<std::uint64_t> connections_{0};
    std::atomic<std::uint64_t> completed_{0};
};

/// Echoes every received byte back on the same connection.
class EchoWorkload final : public Workload {
  public:
    explicit EchoWorkload(std::uint16_t port) : port_(port) {}
    std::string_view kind() const noexcept override { return "echo"; }
    void start(AppStack& stack, Nanos now) override;
    std::size_t poll(AppStack& stack, Nanos now) override;
    WorkloadStats stats() const override;

  private:
    struct Conn {
        SocketId sock;
        std::vector<std::uint8_t> pending;
        std::size_t head = 0;  // bytes of `pending` already sent
        bool closed = false;
    };
    std::uint16_t port_;
    SocketId listener_{};
    std::vector<Conn> conns_;
    std::vector<std::uint8_t> buf_ = std::vector<std::uint8_t>(64 * 1024);
    std::atomic<std::uint64_t> rx_{0};
    std::atomic<std::uint64_t> tx_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::atomic<std::uint64_t> connections_{0};
};

/// Connects and sends `bytes` of the pattern, then closes. bytes == 0 streams
/// forever.
class BulkWorkload final : public Workload {
  public:
    BulkWorkload(Ipv4Addr peer, std::uint16_t port, std::uint64_t bytes)
        : peer_(peer)
        , port_(port)
        , total_(bytes)
    {
    }
    std::string_view kind() const noexcept override { return total_ ? "bulk" : "stream"; }
    void start(AppStack& stack, Nanos now) override;
    std::size_t poll(AppStack& stack, Nanos now) override;
    bool finished() const noexcept override { return done_.load(std::memory_order_acquire); }
    WorkloadStats stats() const override;

    /// Bytes acknowledged by the peer so far.
    std::uint64_t acked() const noexcept { return acked_.load(std::memory_order_relaxed); }

  private:
    Ipv4Addr peer_;
    std::uint16_t port_;
    std::uint64_t total_;
    SocketId sock_{};
    std::uint64_t queued_ = 0;
    bool closed_ = false;
    std::uint64_t chunk_base_ = 0;
    std::vector<std::uint8_t> chunk_;
    std::atomic<std::uint64_t> acked_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::atomic<bool> done_{false};
};

/// NetPIPE-style client: count exchanges of size bytes, each echoed back.
class PingPongWorkload final : public Workload {
  public:
    PingPongWorkload(Ipv4Addr peer, std::uint16_t port, std::size_t size, std::uint64_t count)
        : peer_(peer)
        , port_(port)
        , size_(size)
        , count_(count)
    {
    }
    std::string_view kind() const noexcept override { return "pingpong"; }
    void start(AppStack& stack, Nanos now) override;
    std::size_t poll(AppStack& stack, Nanos now) override;
    bool finished() const noexcept override { return done_.load(std::memory_order_acquire); }
    WorkloadStats stats() const override;

    std::uint64_t exchanges() const noexcept { return exchanges_.load(std::memory_order_acquire); }
    /// Clock time from the first send to the last reply.
    Nanos elapsed() const noexcept { return Nanos(elapsed_.load(std::memory_order_acquire)); }

  private:
    Ipv4Addr peer_;
    std::uint16_t port_;
    std::size_t size_;
    std::uint64_t count_;
    SocketId sock_{};
    bool connected_ = false;
    std::size_t to_send_ = 0;
    std::size_t to_recv_ = 0;
    Nanos first_send_{0};
    std::vector<std::uint8_t> out_;
    std::vector<std::uint8_t> in_;
    std::atomic<std::uint64_t> exchanges_{0};
    std::atomic<std::uint64_t> rx_{0};
    std::atomic<std::uint64_t> tx_{0};
    std::atomic<std::uint64_t> errors_{0};
    std::atomic<Nanos::rep> elapsed_{0};
    std::atomic<bool> done_{false};
};

/// `kind key=value ...` as written in scenario files.
struct WorkloadSpec {
    std::string kind;
    std::map<std::string, std::string> params;
};

/// Parses "bulk peer=client port=80 bytes=1048576". Throws InvalidArgument.
WorkloadSpec parse_workload_spec(const std::string& text);

/// Builds a workload; resolve maps peer names to addresses. Throws
/// InvalidArgument on unknown kinds or missing parameters.
std::unique_ptr<Workload> make_workload(const WorkloadSpec& spec,
                                        const std::function<Ipv4Addr(const std::string&)>& resolve);

}  // namespace msnet
