#include <algorithm>
#include <random>
#include <string>

#include "support.hpp"
#include "xcomm/plugins/sparse_alltoall.hpp"

using namespace xcomm;
using namespace xcomm::testing;

namespace {

class SparseTest : public TransportTest {};

using Pattern = std::vector<SparseMessages<std::int32_t>>; // per sender

Pattern random_pattern(int p, std::mt19937_64& gen) {
    Pattern                     pattern(static_cast<std::size_t>(p));
    std::bernoulli_distribution send(std::min(1.0, 2.0 / p));
    for (int s = 0; s < p; ++s) {
        for (int d = 0; d < p; ++d) {
            if (send(gen)) {
                std::vector<std::int32_t> msg(gen() % 5);
                for (auto& x: msg) {
                    x = static_cast<std::int32_t>(gen() % 1000);
                }
                pattern[static_cast<std::size_t>(s)].emplace_back(d, msg);
                if (gen() % 8 == 0) { // occasional second message to the same destination
                    pattern[static_cast<std::size_t>(s)].emplace_back(d, std::vector<std::int32_t>{-1});
                }
            }
        }
    }
    return pattern;
}

} // namespace

TEST_P(SparseTest, ThreeRankExample) {
    PerRank<SparseMessages<char>> got(3);
    run_ranks(3, GetParam(), [&](Communicator& comm) {
        SparseMessages<char> sends;
        if (comm.rank() == 0) {
            sends = {{2, {'x'}}};
        } else if (comm.rank() == 2) {
            sends = {{0, {'y'}}, {1, {'z'}}};
        }
        got.set(comm.rank(), sparse_alltoall(comm, sends));
    });
    EXPECT_EQ(got[0], (SparseMessages<char>{{2, {'y'}}}));
    EXPECT_EQ(got[1], (SparseMessages<char>{{2, {'z'}}}));
    EXPECT_EQ(got[2], (SparseMessages<char>{{0, {'x'}}}));
}

TEST_P(SparseTest, EmptyPatternTerminates) {
    for (int p: {1, 2, 5}) {
        run_ranks(p, GetParam(), [](Communicator& comm) {
            for (int round = 0; round < 3; ++round) {
                EXPECT_TRUE(sparse_alltoall(comm, SparseMessages<int>{}).empty());
            }
        });
    }
}

TEST_P(SparseTest, DestinationOutOfRange) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        EXPECT_THROW(sparse_alltoall(comm, SparseMessages<int>{{1, {1}}}), UsageError);
    });
}

TEST_P(SparseTest, RandomPatternsMatchDenseOracle) {
    for (int p: {2, 4, 8}) {
        std::mt19937_64 gen(static_cast<std::uint64_t>(p) + 100);
        for (int trial = 0; trial < 10; ++trial) {
            auto const pattern = random_pattern(p, gen);
            run_ranks(p, GetParam(), [&](Communicator& comm) {
                auto const& mine = pattern[static_cast<std::size_t>(comm.rank())];
                std::uint64_t sent_payload = 0;
                SparseMessages<std::int32_t> got;
                auto const stats = measure(comm, [&] { got = sparse_alltoall(comm, mine); });
                sent_payload = stats.messages_sent;
                EXPECT_EQ(sent_payload, mine.size());
                EXPECT_TRUE(std::is_sorted(got.begin(), got.end(), [](auto const& a, auto const& b) {
                    return a.first < b.first;
                }));

                // Oracle: the same pattern through a dense exchange, message by message.
                std::map<int, std::vector<std::int32_t>> dense;
                for (auto const& [d, msg]: mine) {
                    auto& slot = dense[d];
                    slot.push_back(static_cast<std::int32_t>(msg.size()));
                    slot.insert(slot.end(), msg.begin(), msg.end());
                }
                auto [flat, counts] = with_flattened(dense, p).call([&](auto... args) {
                    return comm.alltoallv(std::move(args)..., recv_counts_out());
                });
                SparseMessages<std::int32_t> expected;
                std::size_t                  at = 0;
                for (int s = 0; s < p; ++s) {
                    auto const end = at + static_cast<std::size_t>(counts[static_cast<std::size_t>(s)]);
                    while (at < end) {
                        auto const n = static_cast<std::size_t>(flat[at++]);
                        expected.emplace_back(s, std::vector<std::int32_t>(flat.begin() + static_cast<long>(at),
                                                                           flat.begin() + static_cast<long>(at + n)));
                        at += n;
                    }
                }
                // Same source order, and within a source the send order is kept.
                EXPECT_EQ(got, expected);
            });
        }
    }
}

TEST_P(SparseTest, PayloadEnvelopesIndependentOfGroupSize) {
    for (int p: {2, 4, 8}) {
        PerRank<std::uint64_t> sent(p);
        run_ranks(p, GetParam(), [&](Communicator& comm) {
            // Ring pattern: one destination per rank.
            SparseMessages<int> sends{{(comm.rank() + 1) % p, {comm.rank()}}};
            auto const stats = measure(comm, [&] {
                auto got = sparse_alltoall(comm, sends);
                ASSERT_EQ(got.size(), 1u);
                EXPECT_EQ(got[0].first, (comm.rank() + p - 1) % p);
            });
            sent.set(comm.rank(), stats.messages_sent);
        });
        for (auto n: sent.all()) {
            EXPECT_EQ(n, 1u);
        }
    }
}

TEST_P(SparseTest, DoesNotMatchUserTraffic) {
    run_ranks(3, GetParam(), [](Communicator& comm) {
        int const next = (comm.rank() + 1) % 3;
        comm.send(send_buf(-5), destination(next));
        auto got = sparse_alltoall(comm, SparseMessages<int>{{next, {comm.rank()}}});
        ASSERT_EQ(got.size(), 1u);
        EXPECT_EQ(got[0].second, std::vector<int>{(comm.rank() + 2) % 3});
        EXPECT_EQ(comm.recv<int>(), std::vector<int>{-5});
    });
}

INSTANTIATE_TEST_SUITE_P(Kinds, SparseTest, ::testing::Values(TransportKind::inproc, TransportKind::tcp), transport_name);
