#include "msnet/scenario.hpp"

#include "msnet/error.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace msnet {

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& v, std::size_t line, const std::string& field)
{
    double d = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(line, field, "'" + v + "' is not a number");
    if (d < 0)
        throw ConfigError(line, field, "must not be negative");
    return d;
}

std::uint64_t parse_uint(const std::string& v, std::size_t line, const std::string& field)
{
    std::uint64_t n = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), n);
    if (ec != std::errc{} || p != v.data() + v.size())
        throw ConfigError(line, field, "'" + v + "' is not a non-negative integer");
    return n;
}

bool parse_bool(const std::string& v, std::size_t line, const std::string& field)
{
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    throw ConfigError(line, field, "'" + v + "' is not a boolean");
}

Nanos seconds(double s)
{
    return Nanos(static_cast<Nanos::rep>(s * 1e9 + 0.5));
}

Mode parse_mode(const std::string& v, std::size_t line, const std::string& field)
{
    if (v == "server")
        return Mode::Server;
    if (v == "direct")
        return Mode::Direct;
    throw ConfigError(line, field, "mode must be server or direct, not '" + v + "'");
}

std::vector<std::string> words(const std::string& s)
{
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;)
        out.push_back(w);
    return out;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text)
{
    ScenarioConfig cfg;
    enum class Section { Top, App, Event } section = Section::Top;
    std::set<std::string> names;
    struct PendingEvent {
        std::optional<Nanos> at;
        std::optional<std::string> action;
        std::size_t line = 0;
        std::size_t action_line = 0;
    };
    std::vector<PendingEvent> pending;

    std::istringstream in(text);
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto hash = raw.find('#'); hash != std::string::npos)
            raw.resize(hash);
        const auto s = trim(raw);
        if (s.empty())
            continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError(line, "section", "unterminated section header");
            const auto inner = trim(std::string_view(s).substr(1, s.size() - 2));
            if (inner == "event") {
                section = Section::Event;
                pending.push_back(PendingEvent{{}, {}, line, 0});
                continue;
            }
            if (inner.rfind("app", 0) == 0) {
                const auto q1 = inner.find('"');
                const auto q2 = inner.rfind('"');
                if (q1 == std::string::npos || q2 == q1)
                    throw ConfigError(line, "app", "expected [app \"<name>\"]");
                auto name = inner.substr(q1 + 1, q2 - q1 - 1);
                if (name.empty() || name.find_first_of(" \t,") != std::string::npos)
                    throw ConfigError(line, "app", "app name must be non-empty without spaces or commas");
                if (!names.insert(name).second)
                    throw ConfigError(line, "app", "duplicate app name '" + name + "'");
                section = Section::App;
                cfg.apps.push_back(ScenarioApp{name, "server", "", line});
                continue;
            }
            throw ConfigError(line, "section", "unknown section '" + inner + "'");
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(line, s, "expected key = value");
        const auto key = trim(std::string_view(s).substr(0, eq));
        const auto value = trim(std::string_view(s).substr(eq + 1));
        if (key.empty())
            throw ConfigError(line, key, "missing key");

        switch (section) {
        case Section::Top:
            if (key == "seed")
                cfg.seed = parse_uint(value, line, key);
            else if (key == "virtual_time")
                cfg.virtual_time = parse_bool(value, line, key);
            else if (key == "duration")
                cfg.duration = seconds(parse_real(value, line, key));
            else if (key == "sample_interval")
                cfg.sample_interval = seconds(parse_real(value, line, key));
            else if (key == "metrics")
                cfg.metrics_path = value;
            else if (key == "workers") {
                const auto n = parse_uint(value, line, key);
                if (n == 0 || n > 256)
                    throw ConfigError(line, key, "must be between 1 and 256");
                cfg.workers = static_cast<unsigned>(n);
            } else if (key == "vf_budget")
                cfg.medium.vf_budget = parse_uint(value, line, key);
            else if (key == "loss_rate") {
                const auto r = parse_real(value, line, key);
                if (r > 1.0)
                    throw ConfigError(line, key, "must be within [0, 1]");
                cfg.medium.loss_rate = r;
            } else if (key == "latency_us")
                cfg.medium.latency = seconds(parse_real(value, line, key) / 1e6);
            else if (key == "link_gbps")
                cfg.medium.link_bps = parse_real(value, line, key) * 1e9;
            else if (key == "spoof_check")
                cfg.medium.spoof_check = parse_bool(value, line, key);
            else
                throw ConfigError(line, key, "unknown setting");
            break;
        case Section::App: {
            auto& app = cfg.apps.back();
            if (key == "mode") {
                if (value != "server" && value != "direct" && value != "direct-fallback" &&
                    value != "external")
                    throw ConfigError(line, key,
                                      "mode must be server, direct, direct-fallback or external");
                app.mode = value;
            } else if (key == "workload") {
                try {
                    parse_workload_spec(value);
                } catch (const Error& e) {
                    throw ConfigError(line, key, e.what());
                }
                app.workload = value;
            } else {
                throw ConfigError(line, key, "unknown app setting");
            }
            break;
        }
        case Section::Event: {
            auto& ev = pending.back();
            if (key == "at")
                ev.at = seconds(parse_real(value, line, key));
            else if (key == "action") {
                ev.action = value;
                ev.action_line = line;
            } else
                throw ConfigError(line, key, "unknown event setting");
            break;
        }
        }
    }

    // Workloads may name apps declared later, so they are checked at the end.
    for (const auto& app : cfg.apps) {
        if (app.workload.empty())
            continue;
        try {
            make_workload(parse_workload_spec(app.workload), [&](const std::string& peer) {
                if (!names.contains(peer))
                    throw Error(Errc::InvalidArgument, "unknown peer '" + peer + "'");
                return Ipv4Addr{};
            });
        } catch (const Error& e) {
            throw ConfigError(app.line, "workload", e.what());
        }
    }

    Nanos last{0};
    for (const auto& p : pending) {
        if (!p.at)
            throw ConfigError(p.line, "at", "event without a time");
        if (!p.action)
            throw ConfigError(p.line, "action", "event without an action");
        if (*p.at < last)
            throw ConfigError(p.line, "at", "event times must be non-decreasing");
        last = *p.at;
        ScenarioEvent ev;
        ev.at = *p.at;
        ev.line = p.action_line;
        const auto w = words(*p.action);
        auto need = [&](std::size_t n) {
            if (w.size() != n)
                throw ConfigError(p.action_line, "action", "malformed action '" + *p.action + "'");
        };
        auto known_app = [&](const std::string& n) {
            if (!names.contains(n))
                throw ConfigError(p.action_line, "action", "unknown app '" + n + "'");
        };
        if (w.empty())
            throw ConfigError(p.action_line, "action", "empty action");
        if (w[0] == "crash_server" || (w[0] == "crash" && w.size() == 2 && w[1] == "server")) {
            need(w[0] == "crash" ? 2 : 1);
            ev.action = EventAction::CrashServer;
        } else if (w[0] == "restart_server" ||
                   (w[0] == "restart" && w.size() == 2 && w[1] == "server")) {
            need(w[0] == "restart" ? 2 : 1);
            ev.action = EventAction::RestartServer;
        } else if (w[0] == "switch") {
            need(3);
            known_app(w[1]);
            ev.action = EventAction::Switch;
            ev.app = w[1];
            ev.mode = parse_mode(w[2], p.action_line, "action");
        } else if (w[0] == "kill") {
            need(2);
            known_app(w[1]);
            ev.action = EventAction::Kill;
            ev.app = w[1];
        } else if (w[0] == "stop") {
            need(1);
            ev.action = EventAction::Stop;
        } else {
            throw ConfigError(p.action_line, "action", "unknown action '" + w[0] + "'");
        }
        cfg.events.push_back(std::move(ev));
    }
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path)
{
    std::ifstream f(path);
    if (!f)
        throw Error(Errc::InvalidArgument, "cannot open scenario " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_scenario(buf.str());
}

ScenarioReport run_scenario(const ScenarioConfig& config, MetricsSink& metrics,
                            const ScenarioHooks& hooks)
{
    RuntimeConfig rc;
    rc.virtual_time = config.virtual_time;
    rc.workers = config.workers;
    rc.seed = config.seed;
    rc.medium = config.medium;
    rc.sample_interval = config.sample_interval;
    Runtime rt(rc, &metrics);

    for (const auto& app : config.apps) {
        if (app.mode == "external")
            rt.add_external(app.name);
        else
            rt.add_app(app.name, app.mode == "server" ? Mode::Server : Mode::Direct,
                       app.mode == "direct-fallback");
    }
    for (const auto& app : config.apps) {
        if (app.workload.empty())
            continue;
        rt.set_workload(app.name, make_workload(parse_workload_spec(app.workload),
                                                [&](const std::string& n) { return rt.address_of(n); }));
    }

    std::atomic<bool> quit{false};
    std::atomic<std::uint64_t> event_errors{0};
    for (const auto& ev : config.events) {
        rt.at(ev.at, [&rt, &quit, &event_errors, ev] {
            try {
                switch (ev.action) {
                case EventAction::CrashServer:
                    rt.crash_server();
                    break;
                case EventAction::RestartServer:
                    rt.restart_server();
                    break;
                case EventAction::Switch:
                    rt.switch_app(ev.app, ev.mode);
                    break;
                case EventAction::Kill:
                    rt.kill_app(ev.app);
                    break;
                case EventAction::Stop:
                    quit = true;
                    break;
                }
            } catch (const Error& e) {
                event_errors.fetch_add(1);
                rt.emit("runtime", "event_error", static_cast<double>(e.code()));
            }
        });
    }

    rt.start();
    if (hooks.on_start)
        hooks.on_start(rt, quit);
    rt.run_until(config.duration, [&quit] { return quit.load(); });
    if (hooks.on_finish)
        hooks.on_finish(rt);

    ScenarioReport report;
    report.ended_at = rt.now();
    report.stats = rt.stats_line();
    rt.stop();
    report.apps = rt.apps();
    report.event_errors = event_errors.load();
    bool errors = report.event_errors > 0;
    for (const auto& a : report.apps)
        errors |= a.stats.errors > 0 || a.stats.mismatches > 0;
    report.exit_code = errors ? 1 : 0;
    if (!config.metrics_path.empty())
        metrics.write_csv(config.metrics_path);
    return report;
}

}  // namespace msnet
