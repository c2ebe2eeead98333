#pragma once

#include "msnet/metrics.hpp"
#include "msnet/runtime.hpp"

#include <cstdint>
#include <vector>

namespace msnet {

struct PingPongOptions {
    std::size_t size = 64;
    std::uint64_t count = 10000;
    Mode mode = Mode::Server;
    bool virtual_time = true;
    unsigned workers = 1;
    std::uint64_t seed = 1;
    MediumConfig medium;
    /// Upper bound on clock time for the whole run.
    Nanos timeout = std::chrono::seconds(120);
};

struct PingPongResult {
    std::size_t size = 0;
    std::uint64_t count = 0;
    Mode mode = Mode::Server;
    std::uint64_t exchanges = 0;
    Nanos elapsed{0};
    /// Mean round trip; zero when nothing was exchanged.
    double mean_rtt_us = 0.0;
    /// Message bits per one-way time, NetPIPE style.
    double throughput_mbps = 0.0;
    std::uint64_t frames = 0;
    /// Handoffs between contexts per frame sent by the measured app.
    double handoffs_per_frame = 0.0;
    std::uint64_t errors = 0;
    bool completed = false;
};

/// Measures `count` exchanges of `size` bytes between a managed app in the
/// requested mode and an echoing peer elsewhere on the wire.
PingPongResult run_pingpong(const PingPongOptions& options, MetricsSink* metrics = nullptr);

/// Message sizes 64 B .. 512 KiB in powers of four.
std::vector<std::size_t> sweep_sizes();
/// Exchange count for a size so each sweep point moves a similar volume.
std::uint64_t sweep_count(std::size_t size, std::uint64_t max_count = 10000);

/// Runs every sweep size in both modes.
std::vector<PingPongResult> run_sweep(const PingPongOptions& base, MetricsSink* metrics = nullptr);

}  // namespace msnet
