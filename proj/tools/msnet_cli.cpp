// msnet: scenario runner, ping-pong benchmark and live control client.

#include "msnet/control.hpp"
#include "msnet/error.hpp"
#include "msnet/metrics.hpp"
#include "msnet/pingpong.hpp"
#include "msnet/scenario.hpp"
#include "msnet/supervisor.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

using namespace msnet;

namespace {

std::optional<Mode> parse_mode(const std::string& s)
{
    if (s == "server")
        return Mode::Server;
    if (s == "direct")
        return Mode::Direct;
    return std::nullopt;
}

void write_state(Supervisor& sup, const std::string& path)
{
    const auto bytes = sup.registry_snapshot();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f)
        throw Error(Errc::InvalidArgument, "cannot write state file " + path);
}

void print_pingpong(const PingPongResult& r)
{
    std::printf("%-7s %9zu %7llu %12.3f %14.3f %9.3f %s\n", std::string(mode_name(r.mode)).c_str(),
                r.size, static_cast<unsigned long long>(r.exchanges), r.mean_rtt_us,
                r.throughput_mbps, r.handoffs_per_frame, r.completed ? "ok" : "INCOMPLETE");
}

void print_pingpong_header()
{
    std::printf("%-7s %9s %7s %12s %14s %9s %s\n", "mode", "size", "count", "rtt_us",
                "throughput_mbps", "hops", "status");
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"msnet: user-space multiserver network dataplane"};
    app.require_subcommand(1);
    app.fallthrough();

    bool virtual_time = false;
    std::optional<std::uint64_t> seed;
    std::string metrics_path;
    app.add_flag("--virtual-time", virtual_time, "Run on the scheduler-driven virtual clock");
    app.add_option("--seed", seed, "RNG seed");
    app.add_option("--metrics", metrics_path, "Write metrics CSV to this path");

    // run
    auto* run = app.add_subcommand("run", "Run a scenario file");
    std::string config_path;
    std::string control_path;
    std::string state_path;
    run->add_option("config", config_path, "Scenario file")->required();
    run->add_option("--control", control_path, "Serve the control channel on this local socket");
    run->add_option("--state", state_path, "Write the supervisor state file here at the end");

    // pingpong
    auto* pp = app.add_subcommand("pingpong", "Ping-pong latency/throughput between two endpoints");
    std::size_t size = 64;
    std::uint64_t count = 10000;
    std::string mode = "server";
    unsigned workers = 1;
    pp->add_option("--size", size, "Message size in bytes")->check(CLI::Range(1, 64 << 20));
    pp->add_option("--count", count, "Number of exchanges");
    pp->add_option("--mode", mode, "server or direct")->check(CLI::IsMember({"server", "direct"}));
    pp->add_option("--workers", workers, "Worker threads (wall-clock mode)");

    // bench-sweep
    auto* sweep = app.add_subcommand("bench-sweep", "Ping-pong sweep over message sizes in both modes");
    std::uint64_t max_count = 2000;
    sweep->add_option("--max-count", max_count, "Upper bound on exchanges per size");
    sweep->add_option("--workers", workers, "Worker threads (wall-clock mode)");
    double link_gbps = 0.0;
    double latency_us = 0.0;
    for (auto* sub : {pp, sweep}) {
        sub->add_option("--link-gbps", link_gbps, "Wire rate; 0 means unlimited")->check(CLI::NonNegativeNumber);
        sub->add_option("--latency-us", latency_us, "One-way wire latency")->check(CLI::NonNegativeNumber);
    }

    // ctl
    auto* ctl = app.add_subcommand("ctl", "Send one control command to a running scenario");
    std::string ctl_socket;
    std::vector<std::string> ctl_words;
    ctl->add_option("socket", ctl_socket, "Control socket path")->required();
    ctl->add_option("command", ctl_words, "Command words")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        MetricsSink metrics;
        if (*run) {
            auto cfg = load_scenario(config_path);
            if (virtual_time)
                cfg.virtual_time = true;
            if (seed)
                cfg.seed = *seed;
            if (!metrics_path.empty())
                cfg.metrics_path = metrics_path;

            std::unique_ptr<ControlServer> control;
            ScenarioHooks hooks;
            hooks.on_start = [&](Runtime& rt, std::atomic<bool>& quit) {
                if (!control_path.empty())
                    control = std::make_unique<ControlServer>(
                        control_path, [&rt, &quit](std::string_view line) {
                            return handle_control(rt, line, quit);
                        });
            };
            hooks.on_finish = [&](Runtime& rt) {
                if (control)
                    control->stop();
                if (!state_path.empty())
                    write_state(rt.supervisor(), state_path);
            };
            const auto report = run_scenario(cfg, metrics, hooks);
            std::cout << report.stats << "\n";
            for (const auto& a : report.apps)
                std::cout << a.name << " " << a.ip.to_string() << " "
                          << (a.external ? "external" : mode_name(a.mode)) << " rx=" << a.stats.rx_bytes
                          << " tx=" << a.stats.tx_bytes << " errors=" << a.stats.errors
                          << " mismatches=" << a.stats.mismatches << "\n";
            if (report.event_errors)
                std::cout << "event errors: " << report.event_errors << "\n";
            return report.exit_code;
        }

        PingPongOptions o;
        o.virtual_time = virtual_time;
        o.workers = workers;
        o.seed = seed.value_or(1);
        o.medium.link_bps = link_gbps * 1e9;
        o.medium.latency = Nanos(static_cast<Nanos::rep>(latency_us * 1e3));
        if ((*pp || *sweep) && virtual_time && link_gbps == 0.0 && latency_us == 0.0)
            std::cerr << "note: with --virtual-time and an ideal wire no virtual time passes; "
                         "set --link-gbps or --latency-us for meaningful timings\n";
        if (*pp) {
            o.size = size;
            o.count = count;
            o.mode = *parse_mode(mode);
            const auto r = run_pingpong(o, &metrics);
            print_pingpong_header();
            print_pingpong(r);
            if (!metrics_path.empty())
                metrics.write_csv(metrics_path);
            return r.completed || count == 0 ? 0 : 1;
        }
        if (*sweep) {
            o.count = max_count;
            print_pingpong_header();
            bool ok = true;
            for (const auto sz : sweep_sizes()) {
                for (const auto m : {Mode::Server, Mode::Direct}) {
                    auto oo = o;
                    oo.size = sz;
                    oo.mode = m;
                    oo.count = sweep_count(sz, max_count);
                    const auto r = run_pingpong(oo, &metrics);
                    print_pingpong(r);
                    std::fflush(stdout);
                    ok &= r.completed;
                }
            }
            if (!metrics_path.empty())
                metrics.write_csv(metrics_path);
            return ok ? 0 : 1;
        }
        if (*ctl) {
            std::string line;
            for (const auto& w : ctl_words)
                line += (line.empty() ? "" : " ") + w;
            const auto reply = control_request(ctl_socket, line);
            std::cout << reply << "\n";
            return reply.rfind("ok", 0) == 0 ? 0 : 1;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
