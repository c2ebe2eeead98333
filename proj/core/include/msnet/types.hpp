#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <string_view>

namespace msnet {

using Nanos = std::chrono::nanoseconds;

/// Opaque application identity, unique per supervisor session. Zero is never
/// issued.
struct AppId {
    std::uint32_t value = 0;

    constexpr explicit operator bool() const noexcept { return value != 0; }
    friend constexpr auto operator<=>(AppId, AppId) = default;
};

enum class Proto : std::uint8_t { Udp = 0, Tcp = 1 };

constexpr std::string_view proto_name(Proto p) noexcept
{
    return p == Proto::Udp ? "udp" : "tcp";
}

/// How an application's frames reach the wire: relayed by the network server
/// or through a directly owned device.
enum class Mode : std::uint8_t { Server = 0, Direct = 1 };

constexpr std::string_view mode_name(Mode m) noexcept
{
    return m == Mode::Server ? "server" : "direct";
}

}  // namespace msnet

template <>
struct std::hash<msnet::AppId> {
    std::size_t operator()(msnet::AppId id) const noexcept
    {
        return std::hash<std::uint32_t>{}(id.value);
    }
};
