#pragma once

#include "msnet/types.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msnet {

inline constexpr std::size_t kEthHeaderLen = 14;
inline constexpr std::size_t kIpv4HeaderLen = 20;
inline constexpr std::size_t kUdpHeaderLen = 8;
inline constexpr std::size_t kTcpHeaderLen = 20;
inline constexpr std::size_t kArpPayloadLen = 28;

/// Jumbo-frame default: Ethernet header plus a 9000-byte L3 payload.
inline constexpr std::size_t kDefaultMtuFrame = kEthHeaderLen + 9000;

inline constexpr std::uint16_t kEtherIpv4 = 0x0800;
inline constexpr std::uint16_t kEtherArp = 0x0806;

inline constexpr std::uint8_t kIpProtoTcp = 6;
inline constexpr std::uint8_t kIpProtoUdp = 17;

struct MacAddr {
    std::array<std::uint8_t, 6> octets{};

    static constexpr MacAddr broadcast() noexcept
    {
        return MacAddr{{0xff, 0xff, 0xff, 0xff, 0xff, 0xff}};
    }
    /// Locally administered unicast address derived from a 32-bit tag.
    static constexpr MacAddr local(std::uint8_t space, std::uint32_t tag) noexcept
    {
        return MacAddr{{0x02, space, static_cast<std::uint8_t>(tag >> 24),
                        static_cast<std::uint8_t>(tag >> 16),
                        static_cast<std::uint8_t>(tag >> 8),
                        static_cast<std::uint8_t>(tag)}};
    }

    constexpr bool is_broadcast() const noexcept { return *this == broadcast(); }
    constexpr bool is_zero() const noexcept { return *this == MacAddr{}; }
    /// Zero and broadcast are never valid unicast sources.
    constexpr bool valid_unicast_source() const noexcept
    {
        return !is_zero() && (octets[0] & 0x01) == 0;
    }

    std::string to_string() const;

    friend constexpr auto operator<=>(const MacAddr&, const MacAddr&) = default;
};

struct Ipv4Addr {
    std::array<std::uint8_t, 4> octets{};

    static constexpr Ipv4Addr from_u32(std::uint32_t v) noexcept
    {
        return Ipv4Addr{{static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)}};
    }
    constexpr std::uint32_t to_u32() const noexcept
    {
        return (std::uint32_t{octets[0]} << 24) | (std::uint32_t{octets[1]} << 16) |
               (std::uint32_t{octets[2]} << 8) | std::uint32_t{octets[3]};
    }

    /// Dotted-quad parser; throws Error(InvalidArgument) on malformed input.
    static Ipv4Addr parse(const std::string& text);
    std::string to_string() const;

    friend constexpr auto operator<=>(const Ipv4Addr&, const Ipv4Addr&) = default;
};

struct FlowKey {
    Proto proto = Proto::Udp;
    Ipv4Addr src_ip;
    Ipv4Addr dst_ip;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;

    friend bool operator==(const FlowKey&, const FlowKey&) = default;
};

/// An L2 frame as relayed between stacks, server and devices. Immutable after
/// construction; the parsed flow key is derived from the payload.
class Frame {
  public:
    Frame() = default;
    Frame(MacAddr dst, MacAddr src, std::uint16_t ethertype, std::vector<std::uint8_t> payload);

    const MacAddr& dst_mac() const noexcept { return dst_; }
    const MacAddr& src_mac() const noexcept { return src_; }
    std::uint16_t ethertype() const noexcept { return ethertype_; }
    std::span<const std::uint8_t> payload() const noexcept { return payload_; }
    const std::optional<FlowKey>& parsed() const noexcept { return parsed_; }

    std::size_t encoded_size() const noexcept { return kEthHeaderLen + payload_.size(); }

    friend bool operator==(const Frame&, const Frame&) = default;

  private:
    MacAddr dst_;
    MacAddr src_;
    std::uint16_t ethertype_ = 0;
    std::vector<std::uint8_t> payload_;
    std::optional<FlowKey> parsed_;
};

/// Wire layout: 6B dst, 6B src, 2B ethertype (big-endian), payload. No padding
/// and no FCS. Throws FrameTooLarge above mtu_frame.
std::vector<std::uint8_t> encode_frame(const Frame& f, std::size_t mtu_frame = kDefaultMtuFrame);

/// Throws Truncated for inputs shorter than the Ethernet header or with
/// truncated IPv4/UDP/TCP headers. Non-IP ethertypes yield parsed() == nullopt.
Frame parse_frame(std::span<const std::uint8_t> bytes);

/// Throws NotRoutable when the frame carries no UDP/TCP flow.
FlowKey extract_flow(const Frame& f);

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

/// TCP-lite header fields carried on top of the standard 20-byte TCP layout.
struct TcpLiteHeader {
    std::uint8_t flags = 0;
    std::uint32_t seq = 0;
    std::uint32_t ack = 0;
    std::uint16_t window = 0;
};

struct TcpView {
    FlowKey flow;
    TcpLiteHeader header;
    std::span<const std::uint8_t> data;
};

struct UdpView {
    FlowKey flow;
    std::span<const std::uint8_t> data;
};

struct ArpAnnounce {
    MacAddr sender_mac;
    Ipv4Addr sender_ip;
};

Frame make_udp_frame(MacAddr dst, MacAddr src, const FlowKey& flow,
                     std::span<const std::uint8_t> data);
Frame make_tcp_frame(MacAddr dst, MacAddr src, const FlowKey& flow, const TcpLiteHeader& header,
                     std::span<const std::uint8_t> data);
/// Gratuitous ARP: broadcast announcing sender_ip is reachable at sender_mac.
Frame make_arp_announce(MacAddr sender_mac, Ipv4Addr ip);

std::optional<TcpView> tcp_view(const Frame& f);
std::optional<UdpView> udp_view(const Frame& f);
std::optional<ArpAnnounce> arp_view(const Frame& f);

}  // namespace msnet
