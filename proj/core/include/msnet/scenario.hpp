#pragma once

#include "msnet/metrics.hpp"
#include "msnet/runtime.hpp"

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace msnet {

struct ScenarioApp {
    std::string name;
    /// server, direct, direct-fallback or external.
    std::string mode = "server";
    std::string workload;
    std::size_t line = 0;
};

enum class EventAction { CrashServer, RestartServer, Switch, Kill, Stop };

struct ScenarioEvent {
    Nanos at{0};
    EventAction action = EventAction::Stop;
    std::string app;
    Mode mode = Mode::Server;
    std::size_t line = 0;
};

/// A scenario file:
///
///     seed = 7
///     duration = 10
///     [app "web"]
///     mode = server
///     workload = sink port=80
///     [event]
///     at = 5
///     action = crash server
struct ScenarioConfig {
    std::uint64_t seed = 1;
    bool virtual_time = true;
    Nanos duration = std::chrono::seconds(10);
    Nanos sample_interval = std::chrono::milliseconds(100);
    std::string metrics_path;
    unsigned workers = 1;
    MediumConfig medium;
    std::vector<ScenarioApp> apps;
    std::vector<ScenarioEvent> events;
};

/// Throws ConfigError with the offending line and field.
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

struct ScenarioReport {
    int exit_code = 0;
    Nanos ended_at{0};
    std::uint64_t event_errors = 0;
    std::vector<AppInfo> apps;
    std::string stats;
};

struct ScenarioHooks {
    /// Called once the runtime is running; `quit` ends the run early when set.
    std::function<void(Runtime&, std::atomic<bool>& quit)> on_start;
    /// Called just before the runtime stops.
    std::function<void(Runtime&)> on_finish;
};

/// Builds the runtime, runs the apps and timed events for the configured
/// duration, and writes the metrics CSV when a path is set. Exit code 0 means
/// no application or event reported an error.
ScenarioReport run_scenario(const ScenarioConfig& config, MetricsSink& metrics,
                            const ScenarioHooks& hooks = {});

}  // namespace msnet
