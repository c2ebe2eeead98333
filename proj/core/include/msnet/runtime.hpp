#pragma once

#include "msnet/appnet.hpp"
#include "msnet/clock.hpp"
#include "msnet/metrics.hpp"
#include "msnet/modeswitch.hpp"
#include "msnet/nic.hpp"
#include "msnet/sched.hpp"
#include "msnet/supervisor.hpp"
#include "msnet/timers.hpp"
#include "msnet/workload.hpp"

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace msnet {

struct RuntimeConfig {
    /// Virtual time runs every task on one worker and advances the clock only
    /// when all of them are idle, which makes runs reproducible.
    bool virtual_time = true;
    /// Worker threads in wall-clock mode.
    unsigned workers = 1;
    std::uint64_t seed = 1;
    MediumConfig medium;
    SupervisorConfig supervisor;
    StackConfig stack;
    /// Period of the metrics sampler; zero disables it.
    Nanos sample_interval = std::chrono::milliseconds(100);
};

/// Per-application view for reporting.
struct AppInfo {
    std::string name;
    AppId id;
    Ipv4Addr ip;
    bool external = false;
    Mode mode = Mode::Server;
    bool fell_back = false;
    bool running = false;
    WorkloadStats stats;
};

/// One complete dataplane: medium, supervisor, network server and application
/// loops, all running as tasks of one worker pool, plus the timer, sampler and
/// timed-event machinery that drives them.
///
/// Actions (crash, restart, switch, kill, after) may be called from tasks or
/// from host threads.
class Runtime {
  public:
    explicit Runtime(RuntimeConfig config, MetricsSink* metrics = nullptr);
    Runtime(const Runtime&) = delete;
    Runtime& operator=(const Runtime&) = delete;
    ~Runtime();

    /// Registers a managed application. Throws VfExhausted (without
    /// fallback), PoolExhausted, InvalidArgument for duplicate names.
    AppInfo add_app(const std::string& name, Mode mode, bool fallback_to_server = false);
    /// Attaches a peer machine at the next free 10.0.1.x address.
    AppInfo add_external(const std::string& name);
    /// Before start() only.
    void set_workload(const std::string& name, std::unique_ptr<Workload> workload);
    Ipv4Addr address_of(const std::string& name) const;

    /// Starts workers and every task, including the first server generation.
    void start();
    /// Runs until clock time t or until pred() holds. In virtual time pred is
    /// evaluated by the clock between steps so the stopping point is
    /// reproducible; it must be thread-safe. Returns whether pred held.
    /// Rethrows the first exception escaping a task.
    bool run_until(Nanos t, std::function<bool()> pred = {});
    bool run_for(Nanos d, std::function<bool()> pred = {});
    /// Stops every task and joins the workers. Idempotent.
    void stop();

    // -- actions
    void crash_server();
    /// From a host thread, waits for the crashed generation to halt first.
    /// From a task, throws AlreadyRunning if it has not halted yet.
    void restart_server();
    SwitchPlan switch_app(const std::string& name, Mode to);
    /// Stops an application's loop; a managed app is then unregistered.
    void kill_app(const std::string& name);
    /// Runs fn in the event task once the clock reaches now() + delay.
    void after(Nanos delay, std::function<void()> fn);
    void at(Nanos t, std::function<void()> fn);

    // -- inspection
    const RuntimeConfig& config() const noexcept { return config_; }
    const Clock& clock() const noexcept { return *clock_; }
    Nanos now() const noexcept { return clock_->now(); }
    Medium& medium() noexcept { return *medium_; }
    Supervisor& supervisor() noexcept { return *sup_; }
    sched::WorkerPool& pool() noexcept { return *pool_; }
    TimerService& timers() noexcept { return *timers_; }
    MetricsSink* metrics() noexcept { return metrics_; }

    Workload* workload(const std::string& name);
    /// Only safe to touch from the app's own context or once stopped.
    AppStack* stack(const std::string& name);
    std::shared_ptr<Vif> vif(const std::string& name);
    AppInfo app_info(const std::string& name) const;
    std::vector<AppInfo> apps() const;
    /// One-line counter dump.
    std::string stats_line() const;

    void emit(std::string_view source, std::string_view metric, double value);

  private:
    struct AppCtx;

    AppCtx& ctx(const std::string& name) const;
    AppInfo info_of(const AppCtx& a) const;
    void spawn_app(AppCtx& a);
    void notify_progress();
    bool in_task() const noexcept;

    sched::Task app_loop(AppCtx& a);
    sched::Task medium_loop();
    sched::Task event_loop();
    sched::Task sampler_loop();
    sched::Task clock_loop();
    void timer_thread_main();

    RuntimeConfig config_;
    MetricsSink* metrics_;
    std::unique_ptr<Clock> clock_;
    VirtualClock* vclock_ = nullptr;
    std::unique_ptr<Medium> medium_;
    std::unique_ptr<Supervisor> sup_;
    std::unique_ptr<sched::WorkerPool> pool_;
    std::unique_ptr<TimerService> timers_;

    mutable std::mutex apps_mu_;
    std::vector<std::unique_ptr<AppCtx>> apps_;
    std::uint32_t next_external_ = 1;

    std::mutex events_mu_;
    std::multimap<std::pair<Nanos, std::uint64_t>, std::function<void()>> events_;
    std::uint64_t next_event_seq_ = 0;

    std::optional<sched::TaskId> medium_task_;
    std::optional<sched::TaskId> event_task_;
    std::optional<sched::TaskId> sampler_task_;
    std::optional<sched::TaskId> clock_task_;

    std::atomic<bool> started_{false};
    std::atomic<bool> stopping_{false};
    bool stopped_ = false;

    // Virtual-time horizon: the clock never advances past it.
    std::atomic<Nanos::rep> horizon_{0};
    std::atomic<bool> horizon_reached_{false};
    std::mutex pred_mu_;
    std::function<bool()> pred_;
    std::atomic<bool> pred_held_{false};

    std::mutex progress_mu_;
    std::condition_variable progress_cv_;

    std::thread timer_thread_;
    std::mutex timer_mu_;
    std::condition_variable timer_cv_;
    std::uint64_t timer_gen_ = 0;
};

}  // namespace msnet
