#include <algorithm>
#include <random>

#include "support.hpp"

using namespace xcomm;
using namespace xcomm::testing;

namespace {

class NonBlockingTest : public TransportTest {};

template <typename R>
concept HasValueAccessor = requires(R r) {
    r.value();
} || requires(R r) { r.get(); } || requires(R r) { *r; };

} // namespace

// A pending result offers no way to look at the data other than wait() and test().
static_assert(!HasValueAccessor<NonBlockingResult<std::vector<int>>>);
static_assert(!std::is_copy_constructible_v<NonBlockingResult<std::vector<int>>>);

TEST_P(NonBlockingTest, IsendReturnsBuffer) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        if (comm.rank() == 0) {
            std::vector<int> v{1, 2, 3};
            auto             r = comm.isend(send_buf(std::move(v)), destination(1));
            v                  = r.wait();
            EXPECT_EQ(v, (std::vector<int>{1, 2, 3}));
            EXPECT_TRUE(comm.isend(send_buf(std::vector<int>{}), destination(1)).wait().empty());
        } else {
            EXPECT_EQ(comm.recv<int>(source(0)), (std::vector<int>{1, 2, 3}));
            EXPECT_TRUE(comm.recv<int>(source(0)).empty());
        }
    });
}

TEST_P(NonBlockingTest, TestEmptyUntilMatched) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        if (comm.rank() == 1) {
            auto r = comm.irecv<int>(source(0), tag(3));
            EXPECT_FALSE(r.test().has_value());
            comm.send(send_buf(1), destination(0)); // let the sender go
            std::optional<std::vector<int>> got;
            while (!(got = r.test())) {
            }
            EXPECT_EQ(*got, (std::vector<int>{7, 8}));
            EXPECT_THROW(r.test(), UsageError);
            EXPECT_THROW(r.wait(), UsageError);
        } else {
            comm.recv<int>(source(1));
            comm.send(send_buf({7, 8}), destination(1), tag(3));
        }
    });
}

TEST_P(NonBlockingTest, IrecvWithCount) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        std::vector<int> data(42);
        std::iota(data.begin(), data.end(), 100);
        if (comm.rank() == 0) {
            auto r = comm.irecv<int>(recv_count(42));
            EXPECT_EQ(r.wait(), data);
            auto bad = comm.irecv<int>(recv_count(42));
            EXPECT_THROW(bad.wait(), CountsError);
        } else {
            comm.send(send_buf(data), destination(0));
            comm.send(send_buf(std::vector<int>(41)), destination(0));
        }
    });
}

TEST_P(NonBlockingTest, SelfSendCompletesInBoundedSteps) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        auto r = comm.irecv<double>(source(0));
        auto s = comm.isend(send_buf({2.5}), destination(0));
        int  steps = 0;
        std::optional<std::vector<double>> got;
        while (!(got = r.test()) && steps < 10'000) {
            ++steps;
        }
        ASSERT_TRUE(got.has_value());
        EXPECT_EQ(*got, std::vector<double>{2.5});
        auto sent = s.test();
        ASSERT_TRUE(sent.has_value());
        EXPECT_EQ(*sent, std::vector<double>{2.5});
    });
}

TEST_P(NonBlockingTest, WaitOnCompletedResultReturnsImmediately) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        auto s = comm.isend(send_buf({1}), destination(0));
        EXPECT_EQ(s.wait(), std::vector<int>{1});
        EXPECT_EQ(comm.irecv<int>().wait(), std::vector<int>{1});
    });
}

TEST_P(NonBlockingTest, MovedFromResultIsEmpty) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        auto a = comm.isend(send_buf({1}), destination(0));
        auto b = std::move(a);
        EXPECT_THROW(a.wait(), UsageError); // NOLINT(bugprone-use-after-move)
        EXPECT_EQ(b.wait(), std::vector<int>{1});
        comm.recv<int>();
    });
}

TEST_P(NonBlockingTest, DroppedResultStillCompletes) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        if (comm.rank() == 0) {
            { auto dropped = comm.irecv<int>(source(1), tag(1)); }
            // The dropped receive consumed the first message, so this one gets the second.
            EXPECT_EQ(comm.recv<int>(source(1), tag(1)), std::vector<int>{2});
        } else {
            comm.send(send_buf(1), destination(0), tag(1));
            comm.send(send_buf(2), destination(0), tag(1));
        }
    });
}

TEST(RequestPoolTest, EmptyPool) {
    RequestPool<std::vector<int>> pool;
    EXPECT_TRUE(pool.wait_all().empty());
}

TEST_P(NonBlockingTest, PoolCompletesInSubmissionOrder) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        int const                     other = 1 - comm.rank();
        RequestPool<std::vector<int>> pool;
        for (int i = 0; i < 3; ++i) {
            pool.submit(comm.isend(send_buf({comm.rank(), i}), destination(other), tag(i)));
        }
        for (int i = 2; i >= 0; --i) {
            pool.submit(comm.irecv<int>(source(other), tag(i)));
        }
        EXPECT_EQ(pool.size(), 6u);
        auto values = pool.wait_all();
        ASSERT_EQ(values.size(), 6u);
        for (int i = 0; i < 3; ++i) {
            EXPECT_EQ(values[static_cast<std::size_t>(i)], (std::vector<int>{comm.rank(), i}));
            EXPECT_EQ(values[static_cast<std::size_t>(3 + i)], (std::vector<int>{other, 2 - i}));
        }
        EXPECT_TRUE(pool.wait_all().empty());
        EXPECT_EQ(pool.size(), 0u);
    });
}

TEST_P(NonBlockingTest, FiftyConcurrentIsendsReturnIntact) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        std::mt19937_64 gen(static_cast<std::uint64_t>(comm.rank()));
        if (comm.rank() == 0) {
            std::vector<std::vector<std::int64_t>> originals;
            RequestPool<std::vector<std::int64_t>> pool;
            for (int i = 0; i < 50; ++i) {
                std::vector<std::int64_t> v(gen() % 30);
                for (auto& x: v) {
                    x = static_cast<std::int64_t>(gen());
                }
                originals.push_back(v);
                pool.submit(comm.isend(send_buf(std::move(v)), destination(1)));
            }
            EXPECT_EQ(pool.wait_all(), originals);
        } else {
            for (int i = 0; i < 50; ++i) {
                comm.recv<std::int64_t>();
            }
        }
    });
}

TEST_P(NonBlockingTest, RandomMixDeliversEverythingOnce) {
    int const p = 4;
    PerRank<std::vector<int>> received(p);
    run_ranks(p, GetParam(), [&](Communicator& comm) {
        std::mt19937 gen(static_cast<unsigned>(comm.rank()) + 11);
        // Every rank sends 5 messages to every other rank, in a shuffled order, and posts receives for all.
        std::vector<int> order;
        for (int d = 0; d < p; ++d) {
            for (int i = 0; i < 5; ++i) {
                if (d != comm.rank()) {
                    order.push_back(d);
                }
            }
        }
        std::shuffle(order.begin(), order.end(), gen);
        RequestPool<std::vector<int>> recvs;
        RequestPool<std::vector<int>> sends;
        int                           serial = 0;
        for (int d: order) {
            recvs.submit(comm.irecv<int>());
            sends.submit(comm.isend(send_buf(comm.rank() * 1000 + serial++), destination(d)));
        }
        sends.wait_all();
        std::vector<int> got;
        for (auto& v: recvs.wait_all()) {
            got.insert(got.end(), v.begin(), v.end());
        }
        std::sort(got.begin(), got.end());
        received.set(comm.rank(), got);
    });
    std::vector<int> all, expected;
    for (auto const& v: received.all()) {
        all.insert(all.end(), v.begin(), v.end());
    }
    for (int s = 0; s < p; ++s) {
        for (int i = 0; i < 5 * (p - 1); ++i) {
            expected.push_back(s * 1000 + i);
        }
    }
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, expected);
}

INSTANTIATE_TEST_SUITE_P(Kinds, NonBlockingTest, ::testing::Values(TransportKind::inproc, TransportKind::tcp), transport_name);
