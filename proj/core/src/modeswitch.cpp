#include "msnet/modeswitch.hpp"

#include "msnet/appnet.hpp"
#include "msnet/error.hpp"
#include "msnet/supervisor.hpp"

namespace msnet {

std::string_view switch_step_name(SwitchStep s) noexcept
{
    switch (s) {
    case SwitchStep::VfAlloc: return "vf_alloc";
    case SwitchStep::IpDeactivate: return "ip_deactivate";
    case SwitchStep::IpActivate: return "ip_activate";
    case SwitchStep::ArpAnnounce: return "arp_announce";
    case SwitchStep::VifRetarget: return "vif_retarget";
    case SwitchStep::HandlerAdd: return "handler_add";
    case SwitchStep::HandlerRemove: return "handler_remove";
    case SwitchStep::VfFree: return "vf_free";
    }
    return "?";
}

SwitchPlan switch_to_direct(Supervisor& sup, AppId app)
{
    std::lock_guard lock(sup.mu_);
    AppRecord& r = sup.record_locked(app);
    if (r.detached)
        throw Error(Errc::UnknownApp, "app " + std::to_string(app.value) + " is detached");
    if (r.mode != Mode::Server)
        throw Error(Errc::WrongMode, r.name + " is not in server mode");

    SwitchPlan plan;
    plan.app = app;
    plan.from = Mode::Server;
    plan.to = Mode::Direct;
    plan.started_at = std::chrono::steady_clock::now();

    Medium& medium = sup.medium_;
    auto pf = medium.pf();
    // A failure here leaves nothing to undo.
    auto vf = medium.vf_alloc(app, r.signal);
    plan.steps.push_back(SwitchStep::VfAlloc);

    try {
        medium.ip_unassign(*pf, r.ip);
        plan.steps.push_back(SwitchStep::IpDeactivate);
        medium.ip_assign(*vf, r.ip);
        plan.steps.push_back(SwitchStep::IpActivate);
    } catch (const Error&) {
        // Roll back to server mode: the IP returns to the PF and the VF is freed.
        if (plan.steps.back() == SwitchStep::IpDeactivate)
            medium.ip_assign(*pf, r.ip);
        medium.vf_free(*vf);
        throw;
    }
    medium.transmit(*vf, make_arp_announce(vf->mac(), r.ip));
    plan.steps.push_back(SwitchStep::ArpAnnounce);
    if (r.vif)
        r.vif->retarget(VifRoute{Mode::Direct, r.link, vf, vf->mac()});
    plan.steps.push_back(SwitchStep::VifRetarget);
    if (sup.server_ && sup.server_->alive())
        sup.server_->remove_handler(app);
    plan.steps.push_back(SwitchStep::HandlerRemove);

    r.mode = Mode::Direct;
    r.vf = vf;
    r.mac = vf->mac();
    plan.finished_at = std::chrono::steady_clock::now();
    return plan;
}

SwitchPlan switch_to_server(Supervisor& sup, AppId app)
{
    std::lock_guard lock(sup.mu_);
    AppRecord& r = sup.record_locked(app);
    if (r.detached)
        throw Error(Errc::UnknownApp, "app " + std::to_string(app.value) + " is detached");
    if (r.mode != Mode::Direct)
        throw Error(Errc::WrongMode, r.name + " is not in direct mode");
    if (!r.link)
        throw Error(Errc::NoServerChannel, r.name + " was registered without server rings");

    SwitchPlan plan;
    plan.app = app;
    plan.from = Mode::Direct;
    plan.to = Mode::Server;
    plan.started_at = std::chrono::steady_clock::now();

    Medium& medium = sup.medium_;
    auto pf = medium.pf();
    auto vf = r.vf;
    AppRecord next = r;
    next.mode = Mode::Server;
    next.mac = pf->mac();
    next.vf = nullptr;

    if (sup.server_ && sup.server_->alive())
        sup.server_->add_handler(sup.handler_spec_locked(next));
    plan.steps.push_back(SwitchStep::HandlerAdd);
    if (r.vif)
        r.vif->retarget(VifRoute{Mode::Server, r.link, nullptr, pf->mac()});
    plan.steps.push_back(SwitchStep::VifRetarget);
    medium.ip_unassign(*vf, r.ip);
    plan.steps.push_back(SwitchStep::IpDeactivate);
    medium.ip_assign(*pf, r.ip);
    plan.steps.push_back(SwitchStep::IpActivate);
    medium.transmit(*pf, make_arp_announce(pf->mac(), r.ip));
    plan.steps.push_back(SwitchStep::ArpAnnounce);
    medium.vf_free(*vf);
    plan.steps.push_back(SwitchStep::VfFree);

    r = next;
    plan.finished_at = std::chrono::steady_clock::now();
    return plan;
}

std::optional<std::chrono::nanoseconds> measure_switch_latency(const SwitchPlan& plan)
{
    if (plan.aborted || plan.steps.empty())
        return std::nullopt;
    return std::chrono::duration_cast<std::chrono::nanoseconds>(plan.finished_at -
                                                                plan.started_at);
}

}  // namespace msnet
