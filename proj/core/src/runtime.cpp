#include "msnet/runtime.hpp"

#include "msnet/error.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace msnet {

struct Runtime::AppCtx {
    std::string name;
    std::size_t index = 0;
    bool external = false;
    AppId id;
    Ipv4Addr ip;
    bool fell_back = false;
    std::shared_ptr<Vif> vif;
    std::shared_ptr<ConsumerSignal> signal;
    std::unique_ptr<PortBinder> binder;
    std::shared_ptr<NicDevice> device;
    std::unique_ptr<AppStack> stack;
    std::unique_ptr<Workload> workload;
    std::optional<sched::TaskId> task;
    std::atomic<bool> stop{false};
    std::atomic<bool> running{false};
    // Sampler-only state.
    std::uint64_t last_rx = 0;
    Nanos last_sample{0};
};

namespace {

constexpr auto kHostPoll = std::chrono::milliseconds(5);
constexpr auto kIdleNap = std::chrono::microseconds(50);

}  // namespace

Runtime::Runtime(RuntimeConfig config, MetricsSink* metrics)
    : config_(std::move(config))
    , metrics_(metrics)
{
    if (config_.virtual_time) {
        auto vc = std::make_unique<VirtualClock>();
        vclock_ = vc.get();
        clock_ = std::move(vc);
    } else {
        clock_ = std::make_unique<WallClock>();
    }
    auto mc = config_.medium;
    mc.seed = config_.seed;
    medium_ = std::make_unique<Medium>(mc, *clock_);
    sup_ = std::make_unique<Supervisor>(*medium_, config_.supervisor);
    const unsigned workers = config_.virtual_time ? 1u : std::max(1u, config_.workers);
    pool_ = std::make_unique<sched::WorkerPool>(workers);
    timers_ = std::make_unique<TimerService>(*pool_);
    if (!config_.virtual_time) {
        timers_->set_on_earlier([this] {
            {
                std::lock_guard lock(timer_mu_);
                ++timer_gen_;
            }
            timer_cv_.notify_one();
        });
    }
}

Runtime::~Runtime()
{
    stop();
}

// ------------------------------------------------------------------ setup

AppInfo Runtime::add_app(const std::string& name, Mode mode, bool fallback_to_server)
{
    std::lock_guard lock(apps_mu_);
    for (const auto& a : apps_)
        if (a->name == name)
            throw Error(Errc::InvalidArgument, "duplicate application name '" + name + "'");
    auto h = app_register(*sup_, name, mode, fallback_to_server);
    auto a = std::make_unique<AppCtx>();
    a->name = name;
    a->index = apps_.size();
    a->id = h.id;
    a->ip = h.vif->ip();
    a->fell_back = h.fell_back;
    a->vif = std::move(h.vif);
    a->signal = std::move(h.signal);
    a->binder = std::move(h.binder);
    auto& ref = *a;
    apps_.push_back(std::move(a));
    if (started_.load())
        spawn_app(ref);
    return info_of(ref);
}

AppInfo Runtime::add_external(const std::string& name)
{
    std::lock_guard lock(apps_mu_);
    for (const auto& a : apps_)
        if (a->name == name)
            throw Error(Errc::InvalidArgument, "duplicate application name '" + name + "'");
    if (next_external_ > 254)
        throw Error(Errc::PoolExhausted, "no external addresses left");
    const auto ip = Ipv4Addr::from_u32(0x0a000100u | next_external_++);
    auto h = external_attach(*medium_, ip);
    auto a = std::make_unique<AppCtx>();
    a->name = name;
    a->index = apps_.size();
    a->external = true;
    a->ip = ip;
    a->vif = std::move(h.vif);
    a->signal = std::move(h.signal);
    a->binder = std::move(h.binder);
    a->device = std::move(h.device);
    auto& ref = *a;
    apps_.push_back(std::move(a));
    if (started_.load())
        spawn_app(ref);
    return info_of(ref);
}

void Runtime::set_workload(const std::string& name, std::unique_ptr<Workload> workload)
{
    if (started_.load())
        throw Error(Errc::BadState, "workloads are fixed once the runtime has started");
    ctx(name).workload = std::move(workload);
}

Ipv4Addr Runtime::address_of(const std::string& name) const
{
    return ctx(name).ip;
}

Runtime::AppCtx& Runtime::ctx(const std::string& name) const
{
    std::lock_guard lock(apps_mu_);
    for (const auto& a : apps_)
        if (a->name == name)
            return *a;
    throw Error(Errc::UnknownApp, "no application named '" + name + "'");
}

bool Runtime::in_task() const noexcept
{
    return sched::current_pool() == pool_.get();
}

void Runtime::spawn_app(AppCtx& a)
{
    auto sc = config_.stack;
    sc.iss_seed = static_cast<std::uint32_t>(config_.seed * 0x9E3779B1u + a.index + 1);
    a.stack = std::make_unique<AppStack>(a.vif, *medium_, *clock_, *a.binder, sc);
    a.running = true;
    const auto id = pool_->spawn([this, &a] { return app_loop(a); });
    a.task = id;
    auto* pool = pool_.get();
    a.signal->set_waker([pool, id] { pool->wake(id); });
    pool->wake(id);
}

// ---------------------------------------------------------------- lifecycle

void Runtime::start()
{
    if (started_.exchange(true))
        throw Error(Errc::AlreadyRunning, "runtime already started");
    pool_->run();
    auto* pool = pool_.get();

    medium_task_ = pool->spawn([this] { return medium_loop(); });
    const auto mid = *medium_task_;
    medium_->signal().set_waker([pool, mid] { pool->wake(mid); });
    pool->wake(mid);

    event_task_ = pool->spawn([this] { return event_loop(); });
    if (config_.sample_interval > Nanos::zero())
        sampler_task_ = pool->spawn([this] { return sampler_loop(); });
    if (config_.virtual_time)
        clock_task_ = pool->spawn([this] { return clock_loop(); });
    else
        timer_thread_ = std::thread([this] { timer_thread_main(); });

    sup_->server_start(pool);
    {
        std::lock_guard lock(apps_mu_);
        for (auto& a : apps_)
            spawn_app(*a);
    }
}

bool Runtime::run_until(Nanos t, std::function<bool()> pred)
{
    if (!started_.load())
        throw Error(Errc::BadState, "runtime not started");
    auto check_failure = [this] {
        if (auto f = pool_->first_failure()) {
            stop();
            std::rethrow_exception(f);
        }
    };
    if (config_.virtual_time) {
        {
            std::lock_guard lock(pred_mu_);
            pred_ = std::move(pred);
            pred_held_ = false;
            horizon_reached_ = false;
            horizon_.store(std::max(t, clock_->now()).count());
        }
        bool held = false;
        for (;;) {
            check_failure();
            {
                std::lock_guard lock(pred_mu_);
                if (pred_held_ || horizon_reached_) {
                    held = pred_held_;
                    pred_ = {};
                    break;
                }
            }
            std::unique_lock lock(progress_mu_);
            progress_cv_.wait_for(lock, kHostPoll);
        }
        check_failure();
        return held;
    }
    for (;;) {
        check_failure();
        if (pred && pred())
            return true;
        const auto now = clock_->now();
        if (now >= t)
            return false;
        std::unique_lock lock(progress_mu_);
        progress_cv_.wait_for(lock, std::min<Nanos>(t - now, std::chrono::milliseconds(1)));
    }
}

bool Runtime::run_for(Nanos d, std::function<bool()> pred)
{
    return run_until(clock_->now() + d, std::move(pred));
}

void Runtime::stop()
{
    if (stopped_)
        return;
    stopped_ = true;
    if (!started_.load())
        return;
    stopping_ = true;
    if (timer_thread_.joinable()) {
        {
            std::lock_guard lock(timer_mu_);
            ++timer_gen_;
        }
        timer_cv_.notify_all();
        timer_thread_.join();
    }
    std::vector<sched::TaskId> tasks;
    {
        std::lock_guard lock(apps_mu_);
        for (auto& a : apps_)
            if (a->task)
                tasks.push_back(*a->task);
    }
    for (auto t : {medium_task_, event_task_, sampler_task_})
        if (t)
            tasks.push_back(*t);
    for (auto t : tasks)
        pool_->wake(t);
    pool_->shutdown();
    notify_progress();
}

void Runtime::notify_progress()
{
    {
        std::lock_guard lock(progress_mu_);
    }
    progress_cv_.notify_all();
}

// ------------------------------------------------------------------ actions

void Runtime::crash_server()
{
    sup_->server_crash();
    emit("server", "crash", static_cast<double>(sup_->server_epoch()));
}

void Runtime::restart_server()
{
    if (auto s = sup_->server(); s && !s->halted() && !s->alive() && !in_task()) {
        const auto give_up = std::chrono::steady_clock::now() + std::chrono::seconds(10);
        while (!s->halted() && std::chrono::steady_clock::now() < give_up)
            std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
    sup_->server_start(pool_.get());
    emit("server", "restart", static_cast<double>(sup_->server_epoch()));
}

SwitchPlan Runtime::switch_app(const std::string& name, Mode to)
{
    auto& a = ctx(name);
    if (a.external)
        throw Error(Errc::InvalidArgument, "'" + name + "' is an external peer");
    if (!a.running && started_.load())
        throw Error(Errc::UnknownApp, "'" + name + "' is not running");
    auto plan = to == Mode::Direct ? switch_to_direct(*sup_, a.id) : switch_to_server(*sup_, a.id);
    if (a.task)
        pool_->wake(*a.task);
    if (auto lat = measure_switch_latency(plan))
        emit(name, "switch_latency_wall_ms", std::chrono::duration<double, std::milli>(*lat).count());
    emit(name, "mode", static_cast<double>(to));
    return plan;
}

void Runtime::kill_app(const std::string& name)
{
    auto& a = ctx(name);
    if (!a.task) {
        a.stop = true;
        if (!a.external && a.running.exchange(false))
            sup_->app_unregister(a.id);
        return;
    }
    a.stop = true;
    pool_->wake(*a.task);
    emit(name, "killed", 1);
    if (!in_task()) {
        const auto give_up = std::chrono::steady_clock::now() + std::chrono::seconds(10);
        while (a.running && !stopping_ && std::chrono::steady_clock::now() < give_up)
            std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
}

void Runtime::after(Nanos delay, std::function<void()> fn)
{
    at(clock_->now() + delay, std::move(fn));
}

void Runtime::at(Nanos t, std::function<void()> fn)
{
    {
        std::lock_guard lock(events_mu_);
        events_.emplace(std::pair{t, next_event_seq_++}, std::move(fn));
    }
    if (event_task_)
        pool_->wake(*event_task_);
}

void Runtime::emit(std::string_view source, std::string_view metric, double value)
{
    if (metrics_)
        metrics_->emit(clock_->now(), source, metric, value);
}

// --------------------------------------------------------------- inspection

Workload* Runtime::workload(const std::string& name)
{
    return ctx(name).workload.get();
}

AppStack* Runtime::stack(const std::string& name)
{
    return ctx(name).stack.get();
}

std::shared_ptr<Vif> Runtime::vif(const std::string& name)
{
    return ctx(name).vif;
}

AppInfo Runtime::info_of(const AppCtx& a) const
{
    AppInfo i;
    i.name = a.name;
    i.id = a.id;
    i.ip = a.ip;
    i.external = a.external;
    i.mode = a.vif->mode();
    i.fell_back = a.fell_back;
    i.running = a.running;
    if (a.workload)
        i.stats = a.workload->stats();
    return i;
}

AppInfo Runtime::app_info(const std::string& name) const
{
    return info_of(ctx(name));
}

std::vector<AppInfo> Runtime::apps() const
{
    std::lock_guard lock(apps_mu_);
    std::vector<AppInfo> out;
    for (const auto& a : apps_)
        out.push_back(info_of(*a));
    return out;
}

std::string Runtime::stats_line() const
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(6)
        << "t=" << static_cast<double>(clock_->now().count()) / 1e9;
    if (auto s = sup_->server()) {
        const auto st = s->stats();
        out << " server_epoch=" << st.epoch << " server_alive=" << st.alive
            << " forwarded=" << st.forwarded << " delivered=" << st.delivered
            << " dropped_spoof=" << st.dropped_spoof << " dropped_noroute=" << st.dropped_noroute;
    }
    const auto mc = medium_->counters();
    out << " vfs=" << medium_->vf_count() << "/" << medium_->config().vf_budget
        << " wire_tx=" << mc.transmitted << " wire_lost=" << mc.dropped_loss;
    for (const auto& i : apps()) {
        out << " " << i.name << "=" << (i.external ? "external" : mode_name(i.mode))
            << ",rx:" << i.stats.rx_bytes << ",tx:" << i.stats.tx_bytes
            << ",err:" << i.stats.errors << (i.running ? "" : ",stopped");
    }
    return out.str();
}

// -------------------------------------------------------------------- tasks

sched::Task Runtime::app_loop(AppCtx& a)
{
    const auto self = sched::current_task();
    auto& sig = *a.signal;
    auto& stack = *a.stack;
    sig.enter();
    if (a.workload)
        a.workload->start(stack, clock_->now());
    bool reported = false;
    while (!a.stop && !stopping_) {
        const auto now = clock_->now();
        std::size_t work = stack.poll(now);
        if (a.workload) {
            work += a.workload->poll(stack, now);
            if (!reported && a.workload->finished()) {
                reported = true;
                notify_progress();
            }
        }
        if (work > 0) {
            co_await sched::yield_now();
            continue;
        }
        auto deadline = stack.next_deadline();
        if (a.workload)
            if (auto w = a.workload->next_deadline())
                deadline = deadline ? std::min(*deadline, *w) : *w;
        if (deadline && *deadline <= clock_->now()) {
            co_await sched::yield_now();
            continue;
        }
        if (deadline)
            timers_->arm(self, *deadline);
        else
            timers_->cancel(self);
        sig.leave();
        if (stack.has_input() || a.stop || stopping_) {
            sig.enter();
            continue;
        }
        co_await sched::block();
        sig.enter();
    }
    sig.leave();
    timers_->cancel(self);
    if (a.stop && !stopping_) {
        a.stack.reset();
        if (!a.external)
            sup_->app_unregister(a.id);
    }
    a.running = false;
    notify_progress();
}

sched::Task Runtime::medium_loop()
{
    const auto self = sched::current_task();
    auto& sig = medium_->signal();
    sig.enter();
    while (!stopping_) {
        if (medium_->deliver_due() > 0) {
            co_await sched::yield_now();
            continue;
        }
        if (auto due = medium_->next_due())
            timers_->arm(self, *due);
        else
            timers_->cancel(self);
        sig.leave();
        if (medium_->has_due() || stopping_) {
            sig.enter();
            continue;
        }
        co_await sched::block();
        sig.enter();
    }
    sig.leave();
    timers_->cancel(self);
}

sched::Task Runtime::event_loop()
{
    const auto self = sched::current_task();
    while (!stopping_) {
        std::function<void()> fn;
        std::optional<Nanos> next;
        {
            std::lock_guard lock(events_mu_);
            if (!events_.empty()) {
                auto it = events_.begin();
                if (it->first.first <= clock_->now()) {
                    fn = std::move(it->second);
                    events_.erase(it);
                } else {
                    next = it->first.first;
                }
            }
        }
        if (fn) {
            try {
                fn();
            } catch (const Error& e) {
                emit("runtime", "event_error", static_cast<double>(e.code()));
            }
            co_await sched::yield_now();
            continue;
        }
        if (next)
            timers_->arm(self, *next);
        else
            timers_->cancel(self);
        co_await sched::block();
    }
    timers_->cancel(self);
}

sched::Task Runtime::sampler_loop()
{
    const auto self = sched::current_task();
    const auto interval = config_.sample_interval;
    Nanos next = interval;
    while (!stopping_) {
        const auto now = clock_->now();
        if (now >= next) {
            std::vector<AppCtx*> apps;
            {
                std::lock_guard lock(apps_mu_);
                for (auto& a : apps_)
                    apps.push_back(a.get());
            }
            for (auto* a : apps) {
                const auto st = a->workload ? a->workload->stats() : WorkloadStats{};
                const double dt = static_cast<double>((now - a->last_sample).count()) / 1e9;
                const double mbps =
                    dt > 0 ? static_cast<double>(st.rx_bytes - a->last_rx) * 8.0 / dt / 1e6 : 0.0;
                a->last_rx = st.rx_bytes;
                a->last_sample = now;
                emit(a->name, "rx_bytes", static_cast<double>(st.rx_bytes));
                emit(a->name, "tx_bytes", static_cast<double>(st.tx_bytes));
                emit(a->name, "throughput_mbps", mbps);
                emit(a->name, "errors", static_cast<double>(st.errors));
                if (!a->external)
                    emit(a->name, "mode", static_cast<double>(a->vif->mode()));
            }
            if (auto s = sup_->server()) {
                const auto st = s->stats();
                emit("server", "epoch", static_cast<double>(st.epoch));
                emit("server", "alive", st.alive ? 1.0 : 0.0);
                emit("server", "forwarded", static_cast<double>(st.forwarded));
                emit("server", "dropped_spoof", static_cast<double>(st.dropped_spoof));
            }
            const auto mc = medium_->counters();
            emit("medium", "transmitted", static_cast<double>(mc.transmitted));
            emit("medium", "delivered", static_cast<double>(mc.delivered));
            emit("medium", "dropped_loss", static_cast<double>(mc.dropped_loss));
            emit("medium", "vf_count", static_cast<double>(medium_->vf_count()));
            while (next <= now)
                next += interval;
        }
        timers_->arm(self, next);
        co_await sched::block();
    }
    timers_->cancel(self);
}

sched::Task Runtime::clock_loop()
{
    while (!stopping_) {
        // Only this task is running and nothing is queued: every other task is
        // blocked, so time may move on to the next deadline.
        if (pool_->ready_count() == 0 && pool_->running_count() == 1) {
            bool waiting = false;
            {
                std::lock_guard lock(pred_mu_);
                if (!pred_held_ && !horizon_reached_ && pred_ && pred_())
                    pred_held_ = true;
                if (pred_held_ || horizon_reached_) {
                    waiting = true;
                } else {
                    const Nanos horizon(horizon_.load());
                    const auto next = timers_->next_deadline();
                    if (next && *next <= horizon) {
                        vclock_->advance_to(*next);
                        timers_->fire_due(vclock_->now());
                    } else {
                        vclock_->advance_to(horizon);
                        horizon_reached_ = true;
                        waiting = true;
                    }
                }
            }
            if (waiting) {
                notify_progress();
                std::this_thread::sleep_for(kIdleNap);
            }
        }
        co_await sched::yield_now();
    }
}

void Runtime::timer_thread_main()
{
    std::unique_lock lock(timer_mu_);
    while (!stopping_) {
        const auto gen = timer_gen_;
        const auto changed = [&] { return stopping_ || timer_gen_ != gen; };
        if (auto next = timers_->next_deadline()) {
            const auto now = clock_->now();
            if (*next > now)
                timer_cv_.wait_for(lock, *next - now, changed);
        } else {
            timer_cv_.wait(lock, changed);
        }
        lock.unlock();
        timers_->fire_due(clock_->now());
        lock.lock();
    }
}

}  // namespace msnet
