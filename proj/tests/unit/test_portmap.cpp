#include "msnet/error.hpp"
#include "msnet/portmap.hpp"

#include <gtest/gtest.h>

using namespace msnet;

namespace {

Errc code_of(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return Errc::InvalidArgument;
}

constexpr AppId kA{1}, kB{2};

}  // namespace

TEST(Portmap, BindLookupRelease)
{
    PortmapTable t;
    EXPECT_EQ(t.portbind(kA, Proto::Tcp, 80), 80);
    EXPECT_EQ(t.lookup(Proto::Tcp, 80), kA);
    EXPECT_FALSE(t.lookup(Proto::Udp, 80));  // protocols are separate spaces
    EXPECT_EQ(t.portbind(kA, Proto::Tcp, 80), 80);  // idempotent for the owner
    EXPECT_EQ(code_of([&] { t.portbind(kB, Proto::Tcp, 80); }), Errc::PortInUse);
    EXPECT_EQ(code_of([&] { t.port_release(kB, Proto::Tcp, 80); }), Errc::NotOwner);
    t.port_release(kA, Proto::Tcp, 80);
    EXPECT_FALSE(t.lookup(Proto::Tcp, 80));
    EXPECT_EQ(code_of([&] { t.port_release(kA, Proto::Tcp, 80); }), Errc::NotBound);
}

TEST(Portmap, DynamicPortsAreLowestFreeInRange)
{
    PortmapTable t(PortRange{50000, 50002});
    EXPECT_EQ(t.portbind(kA, Proto::Udp, 0), 50000);
    EXPECT_EQ(t.portbind(kB, Proto::Udp, 0), 50001);
    EXPECT_EQ(t.portbind(kA, Proto::Udp, 0), 50002);
    EXPECT_EQ(code_of([&] { t.portbind(kA, Proto::Udp, 0); }), Errc::Exhausted);
    t.port_release(kB, Proto::Udp, 50001);
    EXPECT_EQ(t.portbind(kB, Proto::Udp, 0), 50001);
    EXPECT_EQ(t.binding(Proto::Udp, 50001)->kind, BindKind::Dynamic);
}

TEST(Portmap, ReleaseAllAndEntriesOrdering)
{
    PortmapTable t;
    t.portbind(kA, Proto::Tcp, 443);
    t.portbind(kA, Proto::Udp, 53);
    t.portbind(kB, Proto::Tcp, 22);
    const auto e = t.entries();
    ASSERT_EQ(e.size(), 3u);
    EXPECT_EQ(e[0].proto, Proto::Udp);
    EXPECT_EQ(e[1].port, 22);
    EXPECT_EQ(e[2].port, 443);
    EXPECT_EQ(t.release_all(kA), 2u);
    EXPECT_EQ(t.entries().size(), 1u);
    t.restore(Proto::Tcp, 8080, PortBinding{kA, BindKind::Dynamic});
    EXPECT_EQ(t.binding(Proto::Tcp, 8080), (PortBinding{kA, BindKind::Dynamic}));
    t.clear();
    EXPECT_TRUE(t.entries().empty());
}

TEST(Portmap, ViewIsReadOnlyWindow)
{
    PortmapTable t;
    PortmapView empty;
    EXPECT_FALSE(empty.lookup(Proto::Tcp, 1));
    PortmapView v(t);
    t.portbind(kB, Proto::Tcp, 9000);
    EXPECT_EQ(v.lookup(Proto::Tcp, 9000), kB);
    static_assert(!std::is_invocable_v<decltype(&PortmapTable::portbind), const PortmapView&, AppId, Proto,
                                       std::uint16_t>);
}
