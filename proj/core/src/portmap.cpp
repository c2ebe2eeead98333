#include "msnet/portmap.hpp"

#include "msnet/error.hpp"

#include <string>

namespace msnet {

namespace {

// Entry word: bit 0 bound, bit 1 dynamic, bits 32..63 app id.
constexpr std::uint64_t kBound = 1;
constexpr std::uint64_t kDynamic = 2;

std::uint64_t encode(PortBinding b)
{
    return kBound | (b.kind == BindKind::Dynamic ? kDynamic : 0) |
           (std::uint64_t{b.app.value} << 32);
}

std::optional<PortBinding> decode(std::uint64_t word)
{
    if (!(word & kBound))
        return std::nullopt;
    return PortBinding{AppId{static_cast<std::uint32_t>(word >> 32)},
                       (word & kDynamic) ? BindKind::Dynamic : BindKind::Static};
}

std::string describe(Proto proto, std::uint16_t port)
{
    return std::string(proto_name(proto)) + "/" + std::to_string(port);
}

}  // namespace

PortmapTable::PortmapTable(PortRange dynamic_range) : range_(dynamic_range)
{
    if (range_.lo == 0 || range_.lo > range_.hi)
        throw Error(Errc::InvalidArgument, "bad dynamic port range");
    for (auto& t : tables_) {
        t = std::make_unique<std::atomic<std::uint64_t>[]>(kPortCount);
        for (std::uint32_t i = 0; i < kPortCount; ++i)
            t[i].store(0, std::memory_order_relaxed);
    }
}

std::atomic<std::uint64_t>& PortmapTable::slot(Proto proto, std::uint16_t port) noexcept
{
    return tables_[static_cast<std::size_t>(proto)][port];
}

const std::atomic<std::uint64_t>& PortmapTable::slot(Proto proto, std::uint16_t port) const noexcept
{
    return tables_[static_cast<std::size_t>(proto)][port];
}

std::uint16_t PortmapTable::portbind(AppId app, Proto proto, std::uint16_t port)
{
    if (!app)
        throw Error(Errc::InvalidArgument, "null application id");
    if (port != 0) {
        auto& s = slot(proto, port);
        if (auto cur = decode(s.load(std::memory_order_acquire))) {
            if (cur->app == app)
                return port;
            throw Error(Errc::PortInUse, describe(proto, port) + " bound to app " +
                                             std::to_string(cur->app.value));
        }
        s.store(encode({app, BindKind::Static}), std::memory_order_release);
        return port;
    }
    for (std::uint32_t p = range_.lo; p <= range_.hi; ++p) {
        auto& s = slot(proto, static_cast<std::uint16_t>(p));
        if (!decode(s.load(std::memory_order_acquire))) {
            s.store(encode({app, BindKind::Dynamic}), std::memory_order_release);
            return static_cast<std::uint16_t>(p);
        }
    }
    throw Error(Errc::Exhausted, std::string("no free dynamic ") + std::string(proto_name(proto)) +
                                     " port");
}

void PortmapTable::port_release(AppId app, Proto proto, std::uint16_t port)
{
    auto& s = slot(proto, port);
    auto cur = decode(s.load(std::memory_order_acquire));
    if (!cur)
        throw Error(Errc::NotBound, describe(proto, port) + " is free");
    if (cur->app != app)
        throw Error(Errc::NotOwner, describe(proto, port) + " bound to app " +
                                        std::to_string(cur->app.value));
    s.store(0, std::memory_order_release);
}

std::size_t PortmapTable::release_all(AppId app)
{
    std::size_t freed = 0;
    for (auto proto : {Proto::Udp, Proto::Tcp}) {
        for (std::uint32_t p = 0; p < kPortCount; ++p) {
            auto& s = slot(proto, static_cast<std::uint16_t>(p));
            auto cur = decode(s.load(std::memory_order_acquire));
            if (cur && cur->app == app) {
                s.store(0, std::memory_order_release);
                ++freed;
            }
        }
    }
    return freed;
}

void PortmapTable::clear()
{
    for (auto& t : tables_)
        for (std::uint32_t i = 0; i < kPortCount; ++i)
            t[i].store(0, std::memory_order_release);
}

std::optional<PortBinding> PortmapTable::binding(Proto proto, std::uint16_t port) const noexcept
{
    return decode(slot(proto, port).load(std::memory_order_acquire));
}

std::optional<AppId> PortmapTable::lookup(Proto proto, std::uint16_t port) const noexcept
{
    if (auto b = binding(proto, port))
        return b->app;
    return std::nullopt;
}

std::vector<PortmapTable::Entry> PortmapTable::entries() const
{
    std::vector<Entry> out;
    for (auto proto : {Proto::Udp, Proto::Tcp})
        for (std::uint32_t p = 0; p < kPortCount; ++p)
            if (auto b = binding(proto, static_cast<std::uint16_t>(p)))
                out.push_back(Entry{proto, static_cast<std::uint16_t>(p), *b});
    return out;
}

void PortmapTable::restore(Proto proto, std::uint16_t port, PortBinding binding)
{
    if (!binding.app || port == 0)
        throw Error(Errc::InvalidArgument, "cannot restore " + describe(proto, port));
    slot(proto, port).store(encode(binding), std::memory_order_release);
}

}  // namespace msnet
