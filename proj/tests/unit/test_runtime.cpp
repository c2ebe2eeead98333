#include "msnet/control.hpp"
#include "msnet/error.hpp"
#include "msnet/runtime.hpp"
#include "msnet/workload.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <unistd.h>

using namespace msnet;
using namespace std::chrono_literals;

namespace {

struct BulkRun {
    std::uint64_t rx = 0;
    std::uint64_t mismatches = 0;
    bool finished = false;
};

BulkRun bulk(Mode mode, std::uint64_t bytes)
{
    RuntimeConfig rc;
    rc.sample_interval = Nanos::zero();
    Runtime rt(rc);
    rt.add_app("web", mode);
    rt.add_external("client");
    rt.set_workload("web", std::make_unique<SinkWorkload>(80));
    auto w = std::make_unique<BulkWorkload>(rt.address_of("web"), 80, bytes);
    auto* client = w.get();
    rt.set_workload("client", std::move(w));
    rt.start();
    BulkRun r;
    r.finished = rt.run_until(30s, [&] { return rt.app_info("web").stats.rx_bytes >= bytes; });
    const auto st = rt.app_info("web").stats;
    r.rx = st.rx_bytes;
    r.mismatches = st.mismatches;
    (void)client;
    rt.stop();
    return r;
}

}  // namespace

TEST(Runtime, BulkTransferInBothModes)
{
    for (const auto mode : {Mode::Server, Mode::Direct}) {
        const auto r = bulk(mode, 2 << 20);
        EXPECT_TRUE(r.finished) << mode_name(mode);
        EXPECT_EQ(r.rx, 2u << 20) << mode_name(mode);
        EXPECT_EQ(r.mismatches, 0u) << mode_name(mode);
    }
}

TEST(Runtime, RejectsUnknownNamesAndDuplicateApps)
{
    RuntimeConfig rc;
    rc.sample_interval = Nanos::zero();
    Runtime rt(rc);
    rt.add_app("a", Mode::Server);
    EXPECT_THROW(rt.add_app("a", Mode::Server), Error);
    EXPECT_THROW(rt.address_of("nobody"), Error);
    rt.start();
    try {
        rt.switch_app("nobody", Mode::Direct);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::UnknownApp);
    }
    rt.stop();
}

TEST(Runtime, KillAppReleasesItsResources)
{
    RuntimeConfig rc;
    rc.sample_interval = Nanos::zero();
    Runtime rt(rc);
    rt.add_app("d", Mode::Direct);
    rt.set_workload("d", std::make_unique<SinkWorkload>(80));
    rt.start();
    rt.run_for(1ms);
    EXPECT_EQ(rt.medium().vf_count(), 1u);
    EXPECT_TRUE(rt.supervisor().portmap_view().lookup(Proto::Tcp, 80));
    rt.kill_app("d");
    rt.run_for(1ms);
    EXPECT_FALSE(rt.app_info("d").running);
    EXPECT_EQ(rt.medium().vf_count(), 0u);
    EXPECT_FALSE(rt.supervisor().portmap_view().lookup(Proto::Tcp, 80));
    rt.stop();
}

TEST(Control, VerbsAndErrors)
{
    RuntimeConfig rc;
    rc.sample_interval = Nanos::zero();
    Runtime rt(rc);
    rt.add_app("web", Mode::Server);
    rt.start();
    std::atomic<bool> quit{false};
    EXPECT_EQ(handle_control(rt, "dance", quit).rfind("error UnknownVerb", 0), 0u);
    EXPECT_EQ(handle_control(rt, "switch ghost direct", quit).rfind("error UnknownApp", 0), 0u);
    EXPECT_EQ(handle_control(rt, "switch web server", quit).rfind("error WrongMode", 0), 0u);
    EXPECT_EQ(handle_control(rt, "switch web direct", quit).rfind("ok", 0), 0u);
    EXPECT_EQ(rt.app_info("web").mode, Mode::Direct);
    EXPECT_EQ(handle_control(rt, "crash server", quit).rfind("ok", 0), 0u);
    // Crashing a crashed server is a no-op.
    EXPECT_EQ(handle_control(rt, "crash server", quit).rfind("ok", 0), 0u);
    EXPECT_EQ(handle_control(rt, "restart server", quit).rfind("ok", 0), 0u);
    EXPECT_EQ(handle_control(rt, "stats", quit).rfind("ok", 0), 0u);
    EXPECT_FALSE(quit.load());
    EXPECT_EQ(handle_control(rt, "quit", quit).rfind("ok", 0), 0u);
    EXPECT_TRUE(quit.load());
    rt.stop();
}

TEST(Control, SocketRoundTrip)
{
    const auto path = (std::filesystem::temp_directory_path() /
                       ("msnet-ctl-" + std::to_string(::getpid()) + ".sock"))
                          .string();
    ControlServer server(path, [](std::string_view line) { return "echo " + std::string(line); });
    EXPECT_EQ(control_request(path, "stats"), "echo stats");
    EXPECT_EQ(control_request(path, "switch a b"), "echo switch a b");
    server.stop();
    EXPECT_THROW(control_request(path, "stats"), Error);
}
