#include "msnet/frame.hpp"

#include "msnet/error.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace msnet {

namespace {

std::uint16_t load_be16(std::span<const std::uint8_t> b, std::size_t at)
{
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t load_be32(std::span<const std::uint8_t> b, std::size_t at)
{
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
           (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void store_be16(std::uint8_t* p, std::uint16_t v)
{
    p[0] = static_cast<std::uint8_t>(v >> 8);
    p[1] = static_cast<std::uint8_t>(v);
}

void store_be32(std::uint8_t* p, std::uint32_t v)
{
    p[0] = static_cast<std::uint8_t>(v >> 24);
    p[1] = static_cast<std::uint8_t>(v >> 16);
    p[2] = static_cast<std::uint8_t>(v >> 8);
    p[3] = static_cast<std::uint8_t>(v);
}

Ipv4Addr load_ip(std::span<const std::uint8_t> b, std::size_t at)
{
    return Ipv4Addr{{b[at], b[at + 1], b[at + 2], b[at + 3]}};
}

enum class Inspect { Ok, Absent, Truncated };

struct L3Info {
    Inspect result = Inspect::Absent;
    FlowKey flow;
    TcpLiteHeader tcp;
    std::size_t data_offset = 0;  // relative to the L3 payload start
    std::size_t data_len = 0;
};

// Walks IPv4 + UDP/TCP headers without reading past the input.
L3Info inspect_ipv4(std::span<const std::uint8_t> p)
{
    L3Info info;
    if (p.size() < kIpv4HeaderLen) {
        info.result = Inspect::Truncated;
        return info;
    }
    const unsigned version = p[0] >> 4;
    const std::size_t ihl = std::size_t{p[0] & 0x0fu} * 4;
    if (version != 4 || ihl < kIpv4HeaderLen)
        return info;
    if (p.size() < ihl) {
        info.result = Inspect::Truncated;
        return info;
    }
    const std::size_t total = load_be16(p, 2);
    if (total < ihl)
        return info;
    if (total > p.size()) {
        info.result = Inspect::Truncated;
        return info;
    }
    info.flow.src_ip = load_ip(p, 12);
    info.flow.dst_ip = load_ip(p, 16);
    const auto l4 = p.subspan(ihl, total - ihl);

    switch (p[9]) {
    case kIpProtoUdp: {
        if (l4.size() < kUdpHeaderLen) {
            info.result = Inspect::Truncated;
            return info;
        }
        const std::size_t ulen = load_be16(l4, 4);
        if (ulen < kUdpHeaderLen)
            return info;
        if (ulen > l4.size()) {
            info.result = Inspect::Truncated;
            return info;
        }
        info.flow.proto = Proto::Udp;
        info.flow.src_port = load_be16(l4, 0);
        info.flow.dst_port = load_be16(l4, 2);
        info.data_offset = ihl + kUdpHeaderLen;
        info.data_len = ulen - kUdpHeaderLen;
        info.result = Inspect::Ok;
        return info;
    }
    case kIpProtoTcp: {
        if (l4.size() < kTcpHeaderLen) {
            info.result = Inspect::Truncated;
            return info;
        }
        const std::size_t off = std::size_t{static_cast<std::uint8_t>(l4[12] >> 4)} * 4;
        if (off < kTcpHeaderLen)
            return info;
        if (off > l4.size()) {
            info.result = Inspect::Truncated;
            return info;
        }
        info.flow.proto = Proto::Tcp;
        info.flow.src_port = load_be16(l4, 0);
        info.flow.dst_port = load_be16(l4, 2);
        info.tcp.seq = load_be32(l4, 4);
        info.tcp.ack = load_be32(l4, 8);
        info.tcp.flags = l4[13];
        info.tcp.window = load_be16(l4, 14);
        info.data_offset = ihl + off;
        info.data_len = l4.size() - off;
        info.result = Inspect::Ok;
        return info;
    }
    default:
        return info;
    }
}

std::vector<std::uint8_t> build_ipv4(const FlowKey& flow, std::uint8_t ip_proto,
                                     std::size_t l4_header_len, std::span<const std::uint8_t> data)
{
    const std::size_t total = kIpv4HeaderLen + l4_header_len + data.size();
    if (total > 0xffff)
        throw Error(Errc::FrameTooLarge, "IPv4 datagram exceeds 65535 bytes");
    // Only the headers are zeroed; the data is appended without a zero fill.
    std::vector<std::uint8_t> out;
    out.reserve(total);
    out.resize(kIpv4HeaderLen + l4_header_len, 0);
    out.insert(out.end(), data.begin(), data.end());
    std::uint8_t* ip = out.data();
    ip[0] = 0x45;
    store_be16(ip + 2, static_cast<std::uint16_t>(total));
    store_be16(ip + 6, 0x4000);  // DF
    ip[8] = 64;
    ip[9] = ip_proto;
    std::copy(flow.src_ip.octets.begin(), flow.src_ip.octets.end(), ip + 12);
    std::copy(flow.dst_ip.octets.begin(), flow.dst_ip.octets.end(), ip + 16);
    std::uint8_t* l4 = ip + kIpv4HeaderLen;
    store_be16(l4, flow.src_port);
    store_be16(l4 + 2, flow.dst_port);
    return out;
}

}  // namespace

std::string MacAddr::to_string() const
{
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", octets[0], octets[1],
                  octets[2], octets[3], octets[4], octets[5]);
    return buf;
}

Ipv4Addr Ipv4Addr::parse(const std::string& text)
{
    Ipv4Addr out;
    std::istringstream in(text);
    for (int i = 0; i < 4; ++i) {
        unsigned v = 0;
        if (!(in >> v) || v > 255)
            throw Error(Errc::InvalidArgument, "bad IPv4 address '" + text + "'");
        out.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
        if (i < 3 && in.get() != '.')
            throw Error(Errc::InvalidArgument, "bad IPv4 address '" + text + "'");
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw Error(Errc::InvalidArgument, "bad IPv4 address '" + text + "'");
    return out;
}

std::string Ipv4Addr::to_string() const
{
    return std::to_string(octets[0]) + "." + std::to_string(octets[1]) + "." +
           std::to_string(octets[2]) + "." + std::to_string(octets[3]);
}

Frame::Frame(MacAddr dst, MacAddr src, std::uint16_t ethertype, std::vector<std::uint8_t> payload)
    : dst_(dst)
    , src_(src)
    , ethertype_(ethertype)
    , payload_(std::move(payload))
{
    if (ethertype_ == kEtherIpv4) {
        const auto info = inspect_ipv4(payload_);
        if (info.result == Inspect::Ok)
            parsed_ = info.flow;
    }
}

std::vector<std::uint8_t> encode_frame(const Frame& f, std::size_t mtu_frame)
{
    if (f.encoded_size() > mtu_frame)
        throw Error(Errc::FrameTooLarge, std::to_string(f.encoded_size()) + " bytes > MTU " +
                                             std::to_string(mtu_frame));
    std::vector<std::uint8_t> out(f.encoded_size());
    std::copy(f.dst_mac().octets.begin(), f.dst_mac().octets.end(), out.begin());
    std::copy(f.src_mac().octets.begin(), f.src_mac().octets.end(), out.begin() + 6);
    store_be16(out.data() + 12, f.ethertype());
    std::copy(f.payload().begin(), f.payload().end(), out.begin() + kEthHeaderLen);
    return out;
}

Frame parse_frame(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < kEthHeaderLen)
        throw Error(Errc::Truncated, std::to_string(bytes.size()) + "-byte input");
    MacAddr dst;
    MacAddr src;
    std::copy_n(bytes.begin(), 6, dst.octets.begin());
    std::copy_n(bytes.begin() + 6, 6, src.octets.begin());
    const std::uint16_t ethertype = load_be16(bytes, 12);
    const auto payload = bytes.subspan(kEthHeaderLen);
    if (ethertype == kEtherIpv4 && inspect_ipv4(payload).result == Inspect::Truncated)
        throw Error(Errc::Truncated, "inner IPv4/L4 header truncated");
    return Frame(dst, src, ethertype, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

FlowKey extract_flow(const Frame& f)
{
    if (!f.parsed())
        throw Error(Errc::NotRoutable, "frame carries no UDP/TCP flow");
    return *f.parsed();
}

Frame make_udp_frame(MacAddr dst, MacAddr src, const FlowKey& flow,
                     std::span<const std::uint8_t> data)
{
    auto payload = build_ipv4(flow, kIpProtoUdp, kUdpHeaderLen, data);
    store_be16(payload.data() + kIpv4HeaderLen + 4,
               static_cast<std::uint16_t>(kUdpHeaderLen + data.size()));
    return Frame(dst, src, kEtherIpv4, std::move(payload));
}

Frame make_tcp_frame(MacAddr dst, MacAddr src, const FlowKey& flow, const TcpLiteHeader& header,
                     std::span<const std::uint8_t> data)
{
    auto payload = build_ipv4(flow, kIpProtoTcp, kTcpHeaderLen, data);
    std::uint8_t* tcp = payload.data() + kIpv4HeaderLen;
    store_be32(tcp + 4, header.seq);
    store_be32(tcp + 8, header.ack);
    tcp[12] = static_cast<std::uint8_t>((kTcpHeaderLen / 4) << 4);
    tcp[13] = header.flags;
    store_be16(tcp + 14, header.window);
    return Frame(dst, src, kEtherIpv4, std::move(payload));
}

Frame make_arp_announce(MacAddr sender_mac, Ipv4Addr ip)
{
    std::vector<std::uint8_t> p(kArpPayloadLen, 0);
    store_be16(p.data(), 1);        // Ethernet
    store_be16(p.data() + 2, kEtherIpv4);
    p[4] = 6;
    p[5] = 4;
    store_be16(p.data() + 6, 1);    // request (gratuitous)
    std::copy(sender_mac.octets.begin(), sender_mac.octets.end(), p.begin() + 8);
    std::copy(ip.octets.begin(), ip.octets.end(), p.begin() + 14);
    std::copy(ip.octets.begin(), ip.octets.end(), p.begin() + 24);
    return Frame(MacAddr::broadcast(), sender_mac, kEtherArp, std::move(p));
}

std::optional<TcpView> tcp_view(const Frame& f)
{
    if (!f.parsed() || f.parsed()->proto != Proto::Tcp)
        return std::nullopt;
    const auto info = inspect_ipv4(f.payload());
    return TcpView{info.flow, info.tcp, f.payload().subspan(info.data_offset, info.data_len)};
}

std::optional<UdpView> udp_view(const Frame& f)
{
    if (!f.parsed() || f.parsed()->proto != Proto::Udp)
        return std::nullopt;
    const auto info = inspect_ipv4(f.payload());
    return UdpView{info.flow, f.payload().subspan(info.data_offset, info.data_len)};
}

std::optional<ArpAnnounce> arp_view(const Frame& f)
{
    const auto p = f.payload();
    if (f.ethertype() != kEtherArp || p.size() < kArpPayloadLen)
        return std::nullopt;
    if (load_be16(p, 0) != 1 || load_be16(p, 2) != kEtherIpv4 || p[4] != 6 || p[5] != 4)
        return std::nullopt;
    ArpAnnounce a;
    std::copy_n(p.begin() + 8, 6, a.sender_mac.octets.begin());
    a.sender_ip = load_ip(p, 14);
    return a;
}

}  // namespace msnet
