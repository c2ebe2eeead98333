#include "msnet/frame.hpp"
#include "msnet/portmap.hpp"
#include "msnet/ring.hpp"
#include "msnet/workload.hpp"

#include <benchmark/benchmark.h>

#include <memory>
#include <random>
#include <thread>

using namespace msnet;

namespace {

void BM_RingPushPop(benchmark::State& state)
{
    auto [tx, rx] = create_channel<std::uint64_t>(1024, std::make_shared<ConsumerSignal>());
    const auto batch = static_cast<std::size_t>(state.range(0));
    std::uint64_t v = 0;
    for (auto _ : state) {
        for (std::size_t i = 0; i < batch; ++i)
            tx.try_push(std::uint64_t(v++));
        for (std::size_t i = 0; i < batch; ++i)
            benchmark::DoNotOptimize(rx.try_pop());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch));
}
BENCHMARK(BM_RingPushPop)->Arg(1)->Arg(32)->Arg(512);

// Producer and consumer on separate threads; on a single core this mostly
// measures the cost of contention and yielding.
void BM_RingCrossThread(benchmark::State& state)
{
    constexpr std::uint64_t kItems = 1 << 16;
    for (auto _ : state) {
        auto [tx, rx] = create_channel<std::uint64_t>(1024, std::make_shared<ConsumerSignal>());
        std::thread consumer([&rx = rx] {
            std::uint64_t seen = 0;
            while (seen < kItems) {
                if (rx.try_pop())
                    ++seen;
                else
                    std::this_thread::yield();
            }
        });
        for (std::uint64_t i = 0; i < kItems;) {
            if (tx.try_push(std::uint64_t(i)) == PushResult::Ok)
                ++i;
            else
                std::this_thread::yield();
        }
        consumer.join();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * kItems));
}
BENCHMARK(BM_RingCrossThread)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_PortmapLookup(benchmark::State& state)
{
    PortmapTable table;
    for (std::uint32_t i = 0; i < 1000; ++i)
        table.portbind(AppId{1 + i % 16}, Proto::Tcp, 0);
    std::mt19937 rng(42);
    std::vector<std::uint16_t> ports(4096);
    for (auto& p : ports)
        p = static_cast<std::uint16_t>(49152 + rng() % 2000);
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(table.lookup(Proto::Tcp, ports[i++ & 4095]));
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PortmapLookup);

FlowKey bench_flow()
{
    return FlowKey{Proto::Tcp, Ipv4Addr::parse("10.0.0.10"), Ipv4Addr::parse("10.0.1.1"), 49152, 80};
}

void BM_FrameEncode(benchmark::State& state)
{
    std::vector<std::uint8_t> data(static_cast<std::size_t>(state.range(0)));
    fill_pattern(data, 0);
    const Frame f = make_tcp_frame(MacAddr::local(1, 1), MacAddr::local(2, 2), bench_flow(), {}, data);
    for (auto _ : state)
        benchmark::DoNotOptimize(encode_frame(f));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * f.encoded_size()));
}
BENCHMARK(BM_FrameEncode)->Arg(64)->Arg(1460)->Arg(8960);

void BM_FrameParse(benchmark::State& state)
{
    std::vector<std::uint8_t> data(static_cast<std::size_t>(state.range(0)));
    fill_pattern(data, 0);
    const auto bytes =
        encode_frame(make_tcp_frame(MacAddr::local(1, 1), MacAddr::local(2, 2), bench_flow(), {}, data));
    for (auto _ : state) {
        auto f = parse_frame(bytes);
        benchmark::DoNotOptimize(f.parsed());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_FrameParse)->Arg(64)->Arg(1460)->Arg(8960);

void BM_PatternFill(benchmark::State& state)
{
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(state.range(0)));
    std::uint64_t offset = 0;
    for (auto _ : state) {
        fill_pattern(buf, offset);
        benchmark::DoNotOptimize(buf.data());
        offset += buf.size();
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * buf.size()));
}
BENCHMARK(BM_PatternFill)->Arg(4096)->Arg(65536);

void BM_PatternVerify(benchmark::State& state)
{
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(state.range(0)));
    fill_pattern(buf, 0);
    for (auto _ : state)
        benchmark::DoNotOptimize(count_pattern_mismatches(buf, 0));
    state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * buf.size()));
}
BENCHMARK(BM_PatternVerify)->Arg(65536);

}  // namespace

BENCHMARK_MAIN();
