#include "msnet/error.hpp"
#include "msnet/ring.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace msnet;

TEST(Ring, CapacityMustBeAPowerOfTwo)
{
    for (std::size_t bad : {0, 1, 3, 6, 1000}) {
        try {
            create_channel<int>(bad);
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::BadCapacity);
        }
    }
    EXPECT_NO_THROW(create_channel<int>(2));
    EXPECT_NO_THROW(create_channel<int>(1024));
}

TEST(Ring, FifoUntilFullThenBackpressure)
{
    auto [tx, rx] = create_channel<int>(8);
    for (int i = 0; i < 8; ++i)
        EXPECT_EQ(tx.try_push(int{i}), PushResult::Ok);
    EXPECT_EQ(tx.try_push(99), PushResult::Full);
    EXPECT_EQ(tx.size(), 8u);
    for (int i = 0; i < 8; ++i) {
        auto v = rx.try_pop();
        ASSERT_TRUE(v);
        EXPECT_EQ(*v, i);
    }
    EXPECT_FALSE(rx.try_pop());
    EXPECT_TRUE(rx.empty());
}

TEST(Ring, FullPushLeavesValueUntouched)
{
    auto [tx, rx] = create_channel<std::vector<int>>(2);
    EXPECT_EQ(tx.try_push(std::vector<int>{1}), PushResult::Ok);
    EXPECT_EQ(tx.try_push(std::vector<int>{2}), PushResult::Ok);
    std::vector<int> keep{7, 8, 9};
    EXPECT_EQ(tx.try_push(std::move(keep)), PushResult::Full);
    EXPECT_EQ(keep.size(), 3u);
}

TEST(Ring, DoorbellRingsOnlyForIdleConsumer)
{
    auto [tx, rx] = create_channel<int>(16);
    auto& sig = rx.signal();
    EXPECT_EQ(tx.try_push(1), PushResult::Ok);
    EXPECT_EQ(rx.doorbell_count(), 1u);  // consumer idle
    sig.enter();
    for (int i = 0; i < 5; ++i)
        tx.try_push(int{i});
    EXPECT_EQ(rx.doorbell_count(), 1u);  // consumer active: no doorbells
    sig.leave();
    tx.try_push(42);
    EXPECT_EQ(rx.doorbell_count(), 2u);
}

TEST(Ring, WaiterIsWokenByPush)
{
    auto [tx, rx] = create_channel<int>(4);
    std::thread consumer([rx = rx]() mutable {
        int got = 0;
        while (got < 1000) {
            if (auto v = rx.try_pop()) {
                EXPECT_EQ(*v, got);
                ++got;
                continue;
            }
            rx.wait();
        }
    });
    for (int i = 0; i < 1000; ++i)
        while (tx.try_push(int{i}) == PushResult::Full)
            std::this_thread::yield();
    consumer.join();
    EXPECT_EQ(tx.size(), 0u);
}

TEST(Ring, SharedSignalCoversSeveralChannels)
{
    auto sig = std::make_shared<ConsumerSignal>();
    auto [a_tx, a_rx] = create_channel<int>(4, sig);
    auto [b_tx, b_rx] = create_channel<int>(4, sig);
    a_tx.try_push(1);
    b_tx.try_push(2);
    EXPECT_EQ(sig->doorbell_count(), 2u);
    int woken = 0;
    sig->set_waker([&] { ++woken; });
    a_tx.try_push(3);
    EXPECT_EQ(woken, 1);
}
