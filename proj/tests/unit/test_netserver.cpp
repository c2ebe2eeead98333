#include "msnet/error.hpp"
#include "msnet/netserver.hpp"
#include "msnet/supervisor.hpp"

#include <gtest/gtest.h>

using namespace msnet;
using namespace std::chrono_literals;

namespace {

struct Rig {
    VirtualClock clock;
    std::unique_ptr<Medium> m = medium_create(4, 0.0, 0ns, clock);
    Supervisor sup{*m};
    Registration app = sup.app_register("app", Mode::Server, std::make_shared<ConsumerSignal>());
    std::shared_ptr<NicDevice> peer = m->attach_external();
    Ipv4Addr peer_ip = Ipv4Addr::parse("10.0.1.1");
    std::shared_ptr<NetServer> server;

    Rig()
    {
        m->ip_assign(*peer, peer_ip);
        sup.portbind(app.id, Proto::Udp, 5000);
        server = sup.server_start(nullptr);
    }

    Frame outbound(std::uint16_t sport = 5000)
    {
        const std::uint8_t d[3] = {1, 2, 3};
        return make_udp_frame(peer->mac(), app.mac, FlowKey{Proto::Udp, app.ip, peer_ip, sport, 9}, d);
    }
    Frame inbound(std::uint16_t dport)
    {
        const std::uint8_t d[3] = {4, 5, 6};
        return make_udp_frame(m->pf()->mac(), peer->mac(), FlowKey{Proto::Udp, peer_ip, app.ip, 9, dport}, d);
    }
};

}  // namespace

TEST(NetServer, ForwardsValidOutboundFramesUnchanged)
{
    Rig r;
    const Frame f = r.outbound();
    ASSERT_EQ(r.app.link->app_tx.try_push(Frame(f)), PushResult::Ok);
    EXPECT_EQ(r.server->poll_once(), 1u);
    r.m->deliver_due();
    auto got = r.peer->rx().try_pop();
    ASSERT_TRUE(got);
    EXPECT_EQ(*got, f);
    EXPECT_EQ(r.server->stats().forwarded, 1u);
    EXPECT_EQ(r.app.link->server_handoffs.load(), 1u);
}

TEST(NetServer, DropsFramesFromUnownedPorts)
{
    Rig r;
    r.app.link->app_tx.try_push(r.outbound(5001));
    r.server->poll_once();
    EXPECT_EQ(r.server->stats().dropped_spoof, 1u);
    EXPECT_EQ(r.m->counters().transmitted, 0u);
}

TEST(NetServer, RoutesInboundByPortmap)
{
    Rig r;
    r.m->transmit(*r.peer, r.inbound(5000));
    r.m->transmit(*r.peer, r.inbound(5999));
    r.m->deliver_due();
    r.server->poll_once();
    EXPECT_TRUE(r.app.link->app_rx.try_pop());
    EXPECT_FALSE(r.app.link->app_rx.try_pop());
    const auto st = r.server->stats();
    EXPECT_EQ(st.delivered, 1u);
    EXPECT_EQ(st.dropped_noroute, 1u);
}

TEST(NetServer, CrashHaltsAndReleasesThePf)
{
    Rig r;
    EXPECT_TRUE(r.m->pf_claimed());
    r.sup.server_crash();
    EXPECT_FALSE(r.server->alive());
    EXPECT_TRUE(r.server->halted());
    EXPECT_FALSE(r.m->pf_claimed());
    r.app.link->app_tx.try_push(r.outbound());
    EXPECT_EQ(r.server->poll_once(), 0u);
    // The next generation picks up the same ring pair.
    auto next = r.sup.server_start(nullptr);
    EXPECT_EQ(next->epoch(), 2u);
    EXPECT_EQ(next->poll_once(), 1u);
    EXPECT_EQ(next->stats().forwarded, 1u);
}

TEST(NetServer, HandlersFollowRegistration)
{
    Rig r;
    const auto other = r.sup.app_register("other", Mode::Server, std::make_shared<ConsumerSignal>());
    r.server->poll_once();
    EXPECT_EQ(r.server->stats().handlers, 2u);
    r.sup.app_unregister(other.id);
    r.server->poll_once();
    EXPECT_EQ(r.server->stats().handlers, 1u);
}
