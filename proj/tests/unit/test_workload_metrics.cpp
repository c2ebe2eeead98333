#include "msnet/error.hpp"
#include "msnet/metrics.hpp"
#include "msnet/workload.hpp"

#include <gtest/gtest.h>

using namespace msnet;
using namespace std::chrono_literals;

TEST(Pattern, FillAndVerifyAtAnyOffset)
{
    std::vector<std::uint8_t> whole(1000);
    fill_pattern(whole, 0);
    std::vector<std::uint8_t> part(300);
    fill_pattern(part, 357);
    EXPECT_TRUE(std::equal(part.begin(), part.end(), whole.begin() + 357));
    EXPECT_EQ(count_pattern_mismatches(part, 357), 0u);
    part[10] ^= 0xff;
    part[20] ^= 0x01;
    EXPECT_EQ(count_pattern_mismatches(part, 357), 2u);
    // A shifted stream does not match.
    EXPECT_GT(count_pattern_mismatches(std::span(whole).subspan(1, 200), 0), 150u);
}

TEST(WorkloadSpec, ParsesKindAndParameters)
{
    const auto s = parse_workload_spec("bulk peer=client port=80 bytes=1048576");
    EXPECT_EQ(s.kind, "bulk");
    EXPECT_EQ(s.params.at("peer"), "client");
    EXPECT_EQ(s.params.at("port"), "80");
    EXPECT_EQ(s.params.at("bytes"), "1048576");
}

TEST(WorkloadSpec, RejectsMalformedInput)
{
    for (const char* bad : {"", "bulk port", "bulk =80", "bulk port=80 port=81"}) {
        try {
            parse_workload_spec(bad);
            ADD_FAILURE() << "accepted '" << bad << "'";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::InvalidArgument) << bad;
        }
    }
    auto resolve = [](const std::string&) { return Ipv4Addr::parse("10.0.1.1"); };
    EXPECT_THROW(make_workload(parse_workload_spec("teleport port=1"), resolve), Error);
    EXPECT_THROW(make_workload(parse_workload_spec("sink"), resolve), Error);
    EXPECT_THROW(make_workload(parse_workload_spec("sink port=banana"), resolve), Error);
    EXPECT_EQ(make_workload(parse_workload_spec("sink port=80"), resolve)->kind(), "sink");
    EXPECT_EQ(make_workload(parse_workload_spec("echo port=7"), resolve)->kind(), "echo");
    EXPECT_EQ(make_workload(parse_workload_spec("bulk peer=x port=80 bytes=10"), resolve)->kind(), "bulk");
}

TEST(Metrics, CsvRoundTripsExactly)
{
    MetricsSink sink;
    sink.emit(Nanos(0), "app/web", "rx_bytes", 1048576);
    sink.emit(1500ms, "server", "forwarded", 0.1 + 0.2);
    sink.emit(2s, "switch/web", "latency_wall_ms", 1.25);
    const auto csv = sink.to_csv();
    EXPECT_EQ(csv.substr(0, MetricsSink::kHeader.size()), MetricsSink::kHeader);
    const auto rows = parse_metrics_csv(csv);
    EXPECT_EQ(rows, sink.rows());
    EXPECT_EQ(rows[1].value, 0.1 + 0.2);
    EXPECT_EQ(rows[1].t, 1.5);
}

TEST(Metrics, RejectsBadCsv)
{
    EXPECT_THROW(parse_metrics_csv("a,b,c\n"), Error);
    EXPECT_THROW(parse_metrics_csv("t,source,metric,value\n1,x,y\n"), Error);
    EXPECT_THROW(parse_metrics_csv("t,source,metric,value\n1,x,y,notanumber\n"), Error);
}

TEST(Metrics, DeterministicViewDropsWallClockMetrics)
{
    EXPECT_TRUE(is_wall_clock_metric("latency_wall_ms"));
    EXPECT_FALSE(is_wall_clock_metric("rx_bytes"));
    MetricsSink a, b;
    for (auto* s : {&a, &b}) {
        s->emit(1s, "app/x", "rx_bytes", 42);
        s->emit(1s, "switch/x", "latency_wall_ms", s == &a ? 0.3 : 0.9);
    }
    EXPECT_NE(a.to_csv(), b.to_csv());
    EXPECT_EQ(deterministic_view(a.to_csv()), deterministic_view(b.to_csv()));
    EXPECT_EQ(parse_metrics_csv(deterministic_view(a.to_csv())).size(), 1u);
}

TEST(Metrics, FormatNumberIsShortestExact)
{
    EXPECT_EQ(format_number(1.0), "1");
    EXPECT_EQ(format_number(0.5), "0.5");
    for (double v : {0.1 + 0.2, 1e-9, 123456789.123, -3.25})
        EXPECT_EQ(std::stod(format_number(v)), v);
}
