#include "msnet/appnet.hpp"

#include "msnet/error.hpp"
#include "msnet/supervisor.hpp"

#include <algorithm>

namespace msnet {

// ------------------------------------------------------------------- Vif

Vif::Vif(AppId app, Ipv4Addr ip, Medium& medium, VifRoute route)
    : app_(app)
    , ip_(ip)
    , medium_(medium)
    , route_(std::move(route))
    , input_link_(route_.link)
{
}

Mode Vif::mode() const
{
    std::lock_guard lock(mu_);
    return route_.mode;
}

MacAddr Vif::mac() const
{
    std::lock_guard lock(mu_);
    return route_.mac;
}

VifRoute Vif::route() const
{
    std::lock_guard lock(mu_);
    return route_;
}

void Vif::retarget(VifRoute route)
{
    std::lock_guard lock(mu_);
    if (route_.device && route_.device != route.device)
        retired_.push_back(route_.device);
    if (route.link)
        input_link_ = route.link;
    route_ = std::move(route);
    retargets_.fetch_add(1, std::memory_order_relaxed);
}

PushResult Vif::output(Frame frame)
{
    VifRoute r;
    {
        std::lock_guard lock(mu_);
        r = route_;
    }
    if (r.mode == Mode::Server) {
        if (!r.link || r.link->app_tx.try_push(std::move(frame)) == PushResult::Full)
            return PushResult::Full;
    } else {
        medium_.transmit(*r.device, std::move(frame));
    }
    handoffs_.fetch_add(1, std::memory_order_relaxed);
    frames_out_.fetch_add(1, std::memory_order_relaxed);
    return PushResult::Ok;
}

std::size_t Vif::poll_input(const std::function<void(Frame&&)>& sink, std::size_t budget)
{
    std::shared_ptr<ServerLink> link;
    std::shared_ptr<NicDevice> dev;
    std::vector<std::shared_ptr<NicDevice>> retired;
    {
        std::lock_guard lock(mu_);
        link = input_link_;
        dev = route_.device;
        retired = retired_;
    }
    std::size_t n = 0;
    auto drain = [&](FrameConsumer& rx) {
        while (n < budget) {
            auto f = rx.try_pop();
            if (!f)
                return;
            ++n;
            sink(std::move(*f));
        }
    };
    if (link)
        drain(link->app_rx);
    if (dev)
        drain(dev->rx());
    for (auto& d : retired)
        drain(d->rx());
    if (!retired.empty()) {
        std::lock_guard lock(mu_);
        std::erase_if(retired_, [](const auto& d) { return !d->attached() && d->rx().empty(); });
    }
    return n;
}

bool Vif::has_input() const
{
    std::lock_guard lock(mu_);
    if (input_link_ && !input_link_->app_rx.empty())
        return true;
    if (route_.device && !route_.device->rx().empty())
        return true;
    return std::any_of(retired_.begin(), retired_.end(),
                       [](const auto& d) { return !d->rx().empty(); });
}

// --------------------------------------------------------------- binders

std::uint16_t SupervisorBinder::bind(Proto proto, std::uint16_t port)
{
    return sup_.portbind(app_, proto, port);
}

void SupervisorBinder::release(Proto proto, std::uint16_t port)
{
    sup_.port_release(app_, proto, port);
}

std::uint16_t LocalPortBinder::bind(Proto proto, std::uint16_t port)
{
    auto& used = used_[static_cast<std::size_t>(proto)];
    if (port != 0) {
        if (!used.insert(port).second)
            throw Error(Errc::PortInUse, std::string(proto_name(proto)) + "/" + std::to_string(port));
        return port;
    }
    for (std::uint32_t p = range_.lo; p <= range_.hi; ++p) {
        if (used.insert(static_cast<std::uint16_t>(p)).second)
            return static_cast<std::uint16_t>(p);
    }
    throw Error(Errc::Exhausted, "no free dynamic port");
}

void LocalPortBinder::release(Proto proto, std::uint16_t port)
{
    if (used_[static_cast<std::size_t>(proto)].erase(port) == 0)
        throw Error(Errc::NotBound, std::string(proto_name(proto)) + "/" + std::to_string(port));
}

// ----------------------------------------------------------- registration

AppHandle app_register(Supervisor& sup, const std::string& name, Mode mode,
                       bool fallback_to_server)
{
    auto signal = std::make_shared<ConsumerSignal>();
    auto reg = sup.app_register(name, mode, signal, fallback_to_server);
    auto vif = std::make_shared<Vif>(reg.id, reg.ip, sup.medium(),
                                     VifRoute{reg.mode, reg.link, reg.vf, reg.mac});
    sup.attach_vif(reg.id, vif);

    AppHandle h;
    h.id = reg.id;
    h.name = name;
    h.mode = reg.mode;
    h.fell_back = reg.fell_back;
    h.vif = std::move(vif);
    h.signal = std::move(signal);
    h.binder = std::make_unique<SupervisorBinder>(sup, reg.id);
    return h;
}

ExternalHost external_attach(Medium& medium, Ipv4Addr ip)
{
    ExternalHost h;
    h.signal = std::make_shared<ConsumerSignal>();
    h.device = medium.attach_external(h.signal);
    medium.ip_assign(*h.device, ip);
    h.vif = std::make_shared<Vif>(AppId{}, ip, medium,
                                  VifRoute{Mode::Direct, nullptr, h.device, h.device->mac()});
    h.binder = std::make_unique<LocalPortBinder>();
    return h;
}

}  // namespace msnet
