#include <atomic>
#include <chrono>
#include <cstring>
#include <random>
#include <thread>

#include "support.hpp"

using namespace xcomm;
using namespace xcomm::testing;
using Clock = std::chrono::steady_clock;

class CommTest : public TransportTest {};

TEST_P(CommTest, RankAndSize) {
    run_ranks(1, GetParam(), [](Communicator& comm) { EXPECT_EQ(comm.rank_and_size(), std::pair(0, 1)); });
    PerRank<std::pair<int, int>> seen(5);
    run_ranks(5, GetParam(), [&](Communicator& comm) { seen.set(comm.rank(), comm.rank_and_size()); });
    EXPECT_EQ(seen[2], std::pair(2, 5));
}

TEST_P(CommTest, SplitIntoPairs) {
    PerRank<std::pair<int, int>> seen(4);
    run_ranks(4, GetParam(), [&](Communicator& comm) {
        auto sub = comm.split(comm.rank() / 2, comm.rank());
        seen.set(comm.rank(), sub.rank_and_size());
        EXPECT_NE(sub.context_id(), comm.context_id());
    });
    EXPECT_EQ(seen.all(), (std::vector<std::pair<int, int>>{{0, 2}, {1, 2}, {0, 2}, {1, 2}}));
}

TEST_P(CommTest, SplitSameColorKeepsMembership) {
    run_ranks(4, GetParam(), [&](Communicator& comm) {
        auto sub = comm.split(7, comm.rank());
        EXPECT_EQ(sub.rank_and_size(), comm.rank_and_size());
        for (int r = 0; r < 4; ++r) {
            EXPECT_EQ(sub.global_rank(r), r);
        }
    });
}

TEST_P(CommTest, SplitByParity) {
    PerRank<std::vector<int>> members(6);
    PerRank<int>              local(6);
    run_ranks(6, GetParam(), [&](Communicator& comm) {
        auto             sub = comm.split(comm.rank() % 2, comm.rank());
        std::vector<int> mine;
        for (int r = 0; r < sub.size(); ++r) {
            mine.push_back(sub.global_rank(r));
        }
        members.set(comm.rank(), mine);
        local.set(comm.rank(), sub.rank());
    });
    // Oracle: ranks of equal parity in ascending order.
    for (int r = 0; r < 6; ++r) {
        std::vector<int> expected;
        for (int q = r % 2; q < 6; q += 2) {
            expected.push_back(q);
        }
        EXPECT_EQ(members[r], expected);
        EXPECT_EQ(local[r], r / 2);
    }
}

TEST_P(CommTest, SplitOrdersByKeyThenRank) {
    PerRank<int> local(4);
    run_ranks(4, GetParam(), [&](Communicator& comm) {
        // keys 1,0,1,0 -> order (0:key 1),(1:key 0),(2:key 1),(3:key 0) = 1,3,0,2
        auto sub = comm.split(0, comm.rank() % 2 == 0 ? 1 : 0);
        local.set(comm.rank(), sub.rank());
    });
    EXPECT_EQ(local.all(), (std::vector<int>{2, 0, 3, 1}));
}

TEST_P(CommTest, RowCommunicatorReportsRowLocalRank) {
    int const c = 3;
    run_ranks(6, GetParam(), [&](Communicator& comm) {
        auto row = comm.split(comm.rank() / c, comm.rank());
        EXPECT_EQ(row.rank(), comm.rank() % c);
        EXPECT_EQ(row.size(), c);
    });
}

TEST_P(CommTest, SplitThenInverseSplitGivesSingletons) {
    run_ranks(6, GetParam(), [&](Communicator& comm) {
        auto rows = comm.split(comm.rank() / 3, comm.rank());
        auto cols = rows.split(rows.rank(), comm.rank());
        // Within a row every member has its own column.
        EXPECT_EQ(cols.rank_and_size(), std::pair(0, 1));
    });
}

TEST_P(CommTest, ChildTrafficDoesNotMatchParent) {
    run_ranks(4, GetParam(), [&](Communicator& comm) {
        auto child = comm.split(0, comm.rank());
        for (int i = 0; i < 10; ++i) {
            if ((comm.rank() + i) % 2 == 0) {
                child.barrier();
                comm.barrier();
            } else {
                child.barrier();
                comm.barrier();
            }
        }
        // User traffic with the same user tag stays apart.
        int const next = (comm.rank() + 1) % 4;
        int const prev = (comm.rank() + 3) % 4;
        child.send_typed<int>(next, 5, std::vector<int>{1});
        comm.send_typed<int>(next, 5, std::vector<int>{2});
        EXPECT_EQ(comm.recv_typed<int>(prev, 5), std::vector<int>{2});
        EXPECT_EQ(child.recv_typed<int>(prev, 5), std::vector<int>{1});
    });
}

TEST_P(CommTest, NestedSplitsHaveDistinctContexts) {
    run_ranks(4, GetParam(), [&](Communicator& comm) {
        auto a = comm.split(comm.rank() % 2, comm.rank());
        auto b = comm.split(0, comm.rank());
        auto c = a.split(0, 0);
        EXPECT_NE(a.context_id(), b.context_id());
        EXPECT_NE(c.context_id(), a.context_id());
        EXPECT_NE(c.context_id(), b.context_id());
        EXPECT_EQ(comm.allgather(send_buf(static_cast<int>(b.context_id()))),
                  std::vector<int>(4, static_cast<int>(b.context_id())));
    });
}

TEST_P(CommTest, BarrierSingleRank) {
    run_ranks(1, GetParam(), [](Communicator& comm) { comm.barrier(); });
}

TEST_P(CommTest, BarrierExitAfterLastEntry) {
    for (int p = 1; p <= 8; ++p) {
        std::vector<Clock::time_point> entries(static_cast<std::size_t>(p)), exits(static_cast<std::size_t>(p));
        run_ranks(p, GetParam(), [&](Communicator& comm) {
            std::this_thread::sleep_for(std::chrono::milliseconds(3 * comm.rank()));
            entries[static_cast<std::size_t>(comm.rank())] = Clock::now();
            comm.barrier();
            exits[static_cast<std::size_t>(comm.rank())] = Clock::now();
        });
        auto const last_entry = *std::max_element(entries.begin(), entries.end());
        for (auto e: exits) {
            EXPECT_GE(e, last_entry) << "p=" << p;
        }
    }
}

TEST_P(CommTest, ConsecutiveBarriersDoNotCrossMatch) {
    std::atomic<int> phase_counter{0};
    run_ranks(5, GetParam(), [&](Communicator& comm) {
        for (int round = 0; round < 20; ++round) {
            if (comm.rank() == round % 5) {
                std::this_thread::sleep_for(std::chrono::milliseconds(1));
                phase_counter.fetch_add(1);
            }
            comm.barrier();
            EXPECT_EQ(phase_counter.load(), round + 1);
            comm.barrier();
        }
    });
}

TEST_P(CommTest, IbarrierSingleRankCompletesOnFirstTest) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        auto req = comm.ibarrier();
        EXPECT_TRUE(req.test());
    });
}

TEST_P(CommTest, IbarrierWaitsForLaggard) {
    for (int p = 2; p <= 8; ++p) {
        std::atomic<bool>              laggard_entered{false};
        std::vector<Clock::time_point> exits(static_cast<std::size_t>(p));
        Clock::time_point              entry;
        run_ranks(p, GetParam(), [&](Communicator& comm) {
            if (comm.rank() == p - 1) {
                std::this_thread::sleep_for(std::chrono::milliseconds(30));
                entry = Clock::now();
                laggard_entered.store(true);
                comm.ibarrier().wait();
                return;
            }
            auto req = comm.ibarrier();
            while (!req.test()) {
                std::this_thread::sleep_for(std::chrono::microseconds(200));
            }
            EXPECT_TRUE(laggard_entered.load()) << "p=" << p;
            exits[static_cast<std::size_t>(comm.rank())] = Clock::now();
        });
        for (int r = 0; r + 1 < p; ++r) {
            EXPECT_GE(exits[static_cast<std::size_t>(r)], entry);
        }
    }
}

TEST_P(CommTest, IbarrierTestBeforeLaggardIsIncomplete) {
    run_ranks(3, GetParam(), [&](Communicator& comm) {
        if (comm.rank() == 2) {
            comm.barrier();
            comm.ibarrier().wait();
            return;
        }
        auto req = comm.ibarrier();
        for (int i = 0; i < 20; ++i) {
            EXPECT_FALSE(req.test());
        }
        comm.barrier();
        req.wait();
        EXPECT_TRUE(req.is_complete());
    });
}

TEST_P(CommTest, TypedRoundTrip) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        if (comm.rank() == 0) {
            comm.send_typed<std::int32_t>(1, 3, std::vector<std::int32_t>{1, 2, 3});
            comm.send_typed<std::int32_t>(1, 4, std::vector<std::int32_t>{});
        } else {
            EXPECT_EQ(comm.recv_typed<std::int32_t>(0, 3), (std::vector<std::int32_t>{1, 2, 3}));
            EXPECT_TRUE(comm.recv_typed<std::int32_t>(0, 4).empty());
        }
    });
}

TEST_P(CommTest, RandomDoublesBitIdentical) {
    std::mt19937_64     gen(99);
    std::vector<double> values(10000);
    for (auto& v: values) {
        auto bits = gen();
        std::memcpy(&v, &bits, sizeof v);
    }
    run_ranks(2, GetParam(), [&](Communicator& comm) {
        if (comm.rank() == 0) {
            comm.send_typed<double>(1, 0, values);
        } else {
            auto const got = comm.recv_typed<double>(0, 0);
            ASSERT_EQ(got.size(), values.size());
            EXPECT_EQ(std::memcmp(got.data(), values.data(), values.size() * sizeof(double)), 0);
        }
    });
}

TEST_P(CommTest, DecodeFailureOnIndivisibleLength) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        if (comm.rank() == 0) {
            comm.send_raw(1, comm.user_tag(0), Bytes(5));
        } else {
            EXPECT_THROW(comm.recv_typed<std::int32_t>(0, 0), DecodeError);
        }
    });
}

TEST_P(CommTest, NamedPointToPoint) {
    run_ranks(3, GetParam(), [](Communicator& comm) {
        if (comm.rank() != 0) {
            comm.send(send_buf(std::vector<int>{comm.rank(), comm.rank()}), destination(0), tag(comm.rank()));
        } else {
            auto from2 = comm.recv<int>(source(2), tag(2));
            EXPECT_EQ(from2, (std::vector<int>{2, 2}));
            std::vector<int> into;
            comm.recv(recv_buf<resize_to_fit>(into), tag(1), recv_count(2));
            EXPECT_EQ(into, (std::vector<int>{1, 1}));
        }
    });
}

TEST(Communicator, UserTagRange) {
    auto group = spawn_group(1);
    Communicator comm(group.endpoint(0));
    EXPECT_NO_THROW(comm.user_tag(65535));
    EXPECT_THROW(comm.user_tag(65536), UsageError);
    EXPECT_THROW(comm.user_tag(-2), UsageError);
    EXPECT_THROW(comm.send(send_buf(1), destination(0), tag(70000)), UsageError);
    EXPECT_THROW(comm.check_rank(1, "destination"), UsageError);
}

TEST(Communicator, RecvCountMismatchIsReported) {
    auto group = spawn_group(1);
    Communicator comm(group.endpoint(0));
    comm.send(send_buf(std::vector<int>{1, 2, 3}), destination(0));
    EXPECT_THROW(comm.recv<int>(recv_count(2)), CountsError);
}

INSTANTIATE_TEST_SUITE_P(Kinds, CommTest, ::testing::Values(TransportKind::inproc, TransportKind::tcp), transport_name);
