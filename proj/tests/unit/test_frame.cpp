#include "msnet/error.hpp"
#include "msnet/frame.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>

using namespace msnet;

namespace {

FlowKey sample_flow(Proto p)
{
    FlowKey f;
    f.proto = p;
    f.src_ip = Ipv4Addr::parse("10.0.0.10");
    f.dst_ip = Ipv4Addr::parse("10.0.1.1");
    f.src_port = 49152;
    f.dst_port = 80;
    return f;
}

std::vector<std::uint8_t> read_hex(const std::string& path)
{
    std::ifstream in(path);
    EXPECT_TRUE(in.good()) << path;
    std::vector<std::uint8_t> out;
    std::string tok;
    while (in >> tok) {
        if (tok[0] == '#') {
            std::getline(in, tok);
            continue;
        }
        out.push_back(static_cast<std::uint8_t>(std::stoul(tok, nullptr, 16)));
    }
    return out;
}

}  // namespace

TEST(Frame, AddressesRoundTripThroughText)
{
    EXPECT_EQ(Ipv4Addr::parse("192.168.1.254").to_string(), "192.168.1.254");
    EXPECT_EQ(Ipv4Addr::parse("10.0.0.1").to_u32(), 0x0a000001u);
    EXPECT_EQ(MacAddr::local(0, 1).to_string(), "02:00:00:00:00:01");
    EXPECT_TRUE(MacAddr::broadcast().is_broadcast());
    EXPECT_FALSE(MacAddr::broadcast().valid_unicast_source());
    EXPECT_TRUE(MacAddr::local(3, 9).valid_unicast_source());
    EXPECT_THROW(Ipv4Addr::parse("10.0.0"), Error);
    EXPECT_THROW(Ipv4Addr::parse("10.0.0.256"), Error);
}

TEST(Frame, UdpEncodeParseRoundTrip)
{
    const std::uint8_t data[] = {'h', 'e', 'l', 'l', 'o'};
    const Frame f = make_udp_frame(MacAddr::local(1, 2), MacAddr::local(1, 3), sample_flow(Proto::Udp), data);
    ASSERT_TRUE(f.parsed());
    EXPECT_EQ(*f.parsed(), sample_flow(Proto::Udp));
    const auto bytes = encode_frame(f);
    EXPECT_EQ(bytes.size(), f.encoded_size());
    const Frame g = parse_frame(bytes);
    EXPECT_EQ(f, g);
    const auto v = udp_view(g);
    ASSERT_TRUE(v);
    EXPECT_EQ(std::vector<std::uint8_t>(v->data.begin(), v->data.end()),
              std::vector<std::uint8_t>(std::begin(data), std::end(data)));
}

TEST(Frame, TcpHeaderFieldsSurviveRoundTrip)
{
    const std::uint8_t data[] = {1, 2, 3};
    TcpLiteHeader h{tcp_flags::kAck | tcp_flags::kFin, 0x01020304, 0xa0b0c0d0, 64};
    const Frame f = make_tcp_frame(MacAddr::local(1, 2), MacAddr::local(1, 3), sample_flow(Proto::Tcp), h, data);
    const Frame g = parse_frame(encode_frame(f));
    const auto v = tcp_view(g);
    ASSERT_TRUE(v);
    EXPECT_EQ(v->header.flags, h.flags);
    EXPECT_EQ(v->header.seq, h.seq);
    EXPECT_EQ(v->header.ack, h.ack);
    EXPECT_EQ(v->header.window, h.window);
    EXPECT_EQ(v->data.size(), 3u);
    EXPECT_FALSE(udp_view(g));
}

TEST(Frame, MatchesGoldenEncoding)
{
    const std::uint8_t data[] = {'p', 'i', 'n', 'g'};
    const Frame f = make_udp_frame(MacAddr::local(1, 0x0a0b0c), MacAddr::local(2, 0x010203),
                                   sample_flow(Proto::Udp), data);
    const auto golden = read_hex(std::string(MSNET_GOLDEN_DIR) + "/udp_frame.hex");
    EXPECT_EQ(encode_frame(f), golden);
    EXPECT_EQ(parse_frame(golden), f);
}

TEST(Frame, OversizeFrameIsRejected)
{
    std::vector<std::uint8_t> big(kDefaultMtuFrame);
    const Frame f(MacAddr::local(1, 1), MacAddr::local(1, 2), 0x88b5, big);
    EXPECT_GT(f.encoded_size(), kDefaultMtuFrame);
    try {
        encode_frame(f);
        FAIL() << "expected FrameTooLarge";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::FrameTooLarge);
    }
    EXPECT_NO_THROW(encode_frame(f, f.encoded_size()));
}

TEST(Frame, TruncatedInputIsRejected)
{
    const std::uint8_t data[] = {9, 9, 9, 9};
    const auto bytes = encode_frame(
        make_tcp_frame(MacAddr::local(1, 2), MacAddr::local(1, 3), sample_flow(Proto::Tcp), {}, data));
    for (std::size_t cut : {std::size_t{0}, std::size_t{13}, kEthHeaderLen + 10, kEthHeaderLen + kIpv4HeaderLen + 5}) {
        try {
            parse_frame(std::span(bytes).first(cut));
            FAIL() << "expected Truncated at " << cut;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::Truncated) << cut;
        }
    }
}

TEST(Frame, NonIpFramesHaveNoFlow)
{
    const Frame arp = make_arp_announce(MacAddr::local(1, 5), Ipv4Addr::parse("10.0.0.9"));
    EXPECT_FALSE(arp.parsed());
    const auto a = arp_view(parse_frame(encode_frame(arp)));
    ASSERT_TRUE(a);
    EXPECT_EQ(a->sender_mac, MacAddr::local(1, 5));
    EXPECT_EQ(a->sender_ip, Ipv4Addr::parse("10.0.0.9"));
    try {
        extract_flow(arp);
        FAIL() << "expected NotRoutable";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NotRoutable);
    }
}

TEST(Frame, ExtractFlowReturnsTheFiveTuple)
{
    const Frame f = make_udp_frame(MacAddr::local(1, 2), MacAddr::local(1, 3), sample_flow(Proto::Udp), {});
    EXPECT_EQ(extract_flow(f), sample_flow(Proto::Udp));
}
