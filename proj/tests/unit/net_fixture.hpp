#pragma once

// Single-threaded harness: app stacks, a detached network server and the
// medium are polled by hand and virtual time jumps to the next deadline
// whenever nothing is runnable.

#include "msnet/appnet.hpp"
#include "msnet/clock.hpp"
#include "msnet/netserver.hpp"
#include "msnet/nic.hpp"
#include "msnet/supervisor.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace msnet::testing {

class ManualNet {
  public:
    explicit ManualNet(MediumConfig mc = {}, SupervisorConfig sc = {})
        : medium(std::make_unique<Medium>(mc, clock))
        , sup(std::make_unique<Supervisor>(*medium, sc))
    {
    }

    AppStack& add_app(const std::string& name, Mode mode, bool fallback = false)
    {
        auto h = std::make_unique<AppHandle>(app_register(*sup, name, mode, fallback));
        stacks.push_back(std::make_unique<AppStack>(h->vif, *medium, clock, *h->binder, stack_config));
        handles.push_back(std::move(h));
        return *stacks.back();
    }

    AppHandle& handle(std::size_t i) { return *handles.at(i); }

    AppStack& add_external(Ipv4Addr ip)
    {
        auto e = std::make_unique<ExternalHost>(external_attach(*medium, ip));
        stacks.push_back(std::make_unique<AppStack>(e->vif, *medium, clock, *e->binder, stack_config));
        externals.push_back(std::move(e));
        return *stacks.back();
    }

    void start_server() { server = sup->server_start(nullptr); }

    /// One pass over everything; returns the work done.
    std::size_t step()
    {
        std::size_t work = 0;
        const auto now = clock.now();
        for (auto& s : stacks)
            work += s->poll(now);
        if (server)
            work += server->poll_once();
        work += medium->deliver_due();
        return work;
    }

    /// Steps until pred holds or virtual time passes limit.
    bool run_until(const std::function<bool()>& pred, Nanos limit = std::chrono::seconds(30))
    {
        for (;;) {
            if (pred())
                return true;
            if (step() > 0)
                continue;
            std::optional<Nanos> next = medium->next_due();
            for (auto& s : stacks)
                if (auto d = s->next_deadline(); d && (!next || *d < *next))
                    next = d;
            if (!next || *next > limit)
                return pred();
            clock.advance_to(std::max(*next, clock.now() + Nanos(1)));
        }
    }

    StackConfig stack_config{};
    VirtualClock clock;
    std::unique_ptr<Medium> medium;
    std::unique_ptr<Supervisor> sup;
    std::shared_ptr<NetServer> server;
    std::vector<std::unique_ptr<AppHandle>> handles;
    std::vector<std::unique_ptr<ExternalHost>> externals;
    std::vector<std::unique_ptr<AppStack>> stacks;
};

}  // namespace msnet::testing
