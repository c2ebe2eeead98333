#include "msnet/pingpong.hpp"

#include <algorithm>
#include <string>

namespace msnet {

namespace {

constexpr std::uint16_t kEchoPort = 7;

}  // namespace

PingPongResult run_pingpong(const PingPongOptions& o, MetricsSink* metrics)
{
    PingPongResult res;
    res.size = o.size;
    res.count = o.count;
    res.mode = o.mode;

    RuntimeConfig rc;
    rc.virtual_time = o.virtual_time;
    rc.workers = o.workers;
    rc.seed = o.seed;
    rc.medium = o.medium;
    rc.sample_interval = Nanos::zero();
    Runtime rt(rc, metrics);
    rt.add_app("ping", o.mode);
    rt.add_external("pong");
    rt.set_workload("pong", std::make_unique<EchoWorkload>(kEchoPort));
    auto client = std::make_unique<PingPongWorkload>(rt.address_of("pong"), kEchoPort, o.size, o.count);
    auto* ping = client.get();
    rt.set_workload("ping", std::move(client));

    rt.start();
    res.completed = rt.run_until(o.timeout, [ping] { return ping->finished(); });
    // Let frames still queued towards the network server (the closing FIN
    // among them) be forwarded so the hop count covers every frame sent.
    const auto vif = rt.vif("ping");
    const auto link = rt.supervisor().app(rt.app_info("ping").id)->link;
    auto hops = [&] { return vif->handoffs() + (link ? link->server_handoffs.load() : 0); };
    const auto expected_per_frame = o.mode == Mode::Direct ? 1u : 2u;
    rt.run_until(rt.now() + std::chrono::milliseconds(50),
                 [&] { return hops() == expected_per_frame * vif->frames_out(); });
    rt.stop();

    res.exchanges = ping->exchanges();
    res.errors = ping->stats().errors;
    res.completed = res.completed && res.errors == 0 && res.exchanges == o.count;
    res.elapsed = ping->elapsed();
    if (res.exchanges > 0 && res.elapsed > Nanos::zero()) {
        const double rtt_s = static_cast<double>(res.elapsed.count()) / 1e9 /
                             static_cast<double>(res.exchanges);
        res.mean_rtt_us = rtt_s * 1e6;
        res.throughput_mbps = static_cast<double>(o.size) * 8.0 / (rtt_s / 2.0) / 1e6;
    }

    const std::uint64_t handoffs = hops();
    res.frames = vif->frames_out();
    if (res.frames > 0)
        res.handoffs_per_frame = static_cast<double>(handoffs) / static_cast<double>(res.frames);

    if (metrics) {
        const std::string src = "pingpong/" + std::string(mode_name(o.mode)) + "/" + std::to_string(o.size);
        metrics->emit(rt.now(), src, "exchanges", static_cast<double>(res.exchanges));
        metrics->emit(rt.now(), src, "rtt_us", res.mean_rtt_us);
        metrics->emit(rt.now(), src, "throughput_mbps", res.throughput_mbps);
        metrics->emit(rt.now(), src, "handoffs_per_frame", res.handoffs_per_frame);
    }
    return res;
}

std::vector<std::size_t> sweep_sizes()
{
    std::vector<std::size_t> out;
    for (std::size_t s = 64; s <= 512 * 1024; s *= 4)
        out.push_back(s);
    if (out.back() != 512 * 1024)
        out.push_back(512 * 1024);
    return out;
}

std::uint64_t sweep_count(std::size_t size, std::uint64_t max_count)
{
    constexpr std::uint64_t kVolume = 64ull << 20;
    return std::clamp<std::uint64_t>(kVolume / std::max<std::size_t>(size, 1), 20, max_count);
}

std::vector<PingPongResult> run_sweep(const PingPongOptions& base, MetricsSink* metrics)
{
    std::vector<PingPongResult> out;
    for (const auto size : sweep_sizes()) {
        for (const auto mode : {Mode::Server, Mode::Direct}) {
            auto o = base;
            o.size = size;
            o.mode = mode;
            o.count = sweep_count(size, base.count);
            out.push_back(run_pingpong(o, metrics));
        }
    }
    return out;
}

}  // namespace msnet
