#include <numeric>
#include <random>
#include <set>

#include "support.hpp"
#include "xcomm/plugins/grid_alltoall.hpp"

using namespace xcomm;
using namespace xcomm::testing;

namespace {
class GridTest : public TransportTest {};
} // namespace

TEST(GridTopologyTest, Shapes) {
    GridTopology four(4);
    EXPECT_EQ(four.columns, 2);
    EXPECT_EQ(four.rows, 2);
    EXPECT_EQ(four.row_of(3), 1);
    EXPECT_EQ(four.column_of(3), 1);

    GridTopology three(3);
    EXPECT_EQ(three.columns, 2);
    EXPECT_EQ(three.rows, 2);
    EXPECT_EQ(three.row_width(1), 1);
    EXPECT_EQ(three.rank_at(1, 1), -1);

    GridTopology sixteen(16);
    EXPECT_EQ(sixteen.columns, 4);
    EXPECT_EQ(sixteen.rows, 4);
    EXPECT_EQ(sixteen.row_members(sixteen.row_of(9)), (std::vector<int>{8, 9, 10, 11}));
    EXPECT_EQ(sixteen.column_members(1), (std::vector<int>{1, 5, 9, 13}));
}

TEST(GridTopologyTest, PositionsAreUniqueAndRowsComplete) {
    for (int p = 1; p <= 40; ++p) {
        GridTopology           t(p);
        std::set<std::pair<int, int>> seen;
        for (int k = 0; k < p; ++k) {
            EXPECT_TRUE(seen.emplace(t.row_of(k), t.column_of(k)).second);
            EXPECT_EQ(t.rank_at(t.row_of(k), t.column_of(k)), k);
        }
        for (int row = 0; row + 1 < t.rows; ++row) {
            EXPECT_EQ(t.row_width(row), t.columns);
        }
        EXPECT_GE(t.row_width(t.rows - 1), 1);
        EXPECT_EQ((t.rows - 1) * t.columns + t.row_width(t.rows - 1), p);
    }
}

TEST(GridTopologyTest, Intermediates) {
    EXPECT_EQ(GridTopology(4).intermediate_of(0, 3), 1);
    EXPECT_EQ(GridTopology(3).intermediate_of(2, 1), 1);
    for (int p = 1; p <= 20; ++p) {
        GridTopology t(p);
        for (int s = 0; s < p; ++s) {
            EXPECT_EQ(t.intermediate_of(s, s), s);
            for (int d = 0; d < p; ++d) {
                int const i = t.intermediate_of(s, d);
                ASSERT_GE(i, 0);
                ASSERT_LT(i, p);
                EXPECT_EQ(t.column_of(i), t.column_of(d));
                EXPECT_TRUE(t.row_of(i) == t.row_of(s) || t.row_of(i) == t.row_of(s) - 1);
                if (t.rows == 1) {
                    EXPECT_EQ(i, d);
                }
            }
        }
    }
}

TEST(GridTopologyTest, HopPartnersAreConsistent) {
    for (int p = 1; p <= 30; ++p) {
        GridTopology t(p);
        for (int s = 0; s < p; ++s) {
            auto const targets = t.hop1_targets(s);
            for (int d = 0; d < p; ++d) {
                EXPECT_TRUE(std::binary_search(targets.begin(), targets.end(), t.intermediate_of(s, d)));
            }
            for (int i: targets) {
                auto const sources = t.hop1_sources(i);
                EXPECT_TRUE(std::binary_search(sources.begin(), sources.end(), s)) << p << " " << s << " " << i;
            }
            // distinct non-self partners across both hops
            std::set<int> partners(targets.begin(), targets.end());
            for (int m: t.column_members(t.column_of(s))) {
                partners.insert(m);
            }
            partners.erase(s);
            EXPECT_LE(static_cast<int>(partners.size()), (t.columns - 1) + (t.rows - 1) + 2);
        }
    }
}

TEST_P(GridTest, BuildGridSplitsRowsAndColumns) {
    run_ranks(7, GetParam(), [](Communicator& comm) {
        auto const grid = build_grid(comm);
        EXPECT_EQ(grid.topology.columns, 3);
        EXPECT_EQ(grid.row.size(), grid.topology.row_width(grid.topology.row_of(comm.rank())));
        EXPECT_EQ(grid.column.size(), static_cast<int>(grid.topology.column_members(grid.topology.column_of(comm.rank())).size()));
    });
}

TEST_P(GridTest, SingleRankIsIdentity) {
    run_ranks(1, GetParam(), [](Communicator& comm) {
        auto [data, counts] = grid_alltoallv(comm, GridTopology(1), std::vector<int>{4, 5}, std::vector<int>{2});
        EXPECT_EQ(data, (std::vector<int>{4, 5}));
        EXPECT_EQ(counts, std::vector<int>{2});
    });
}

TEST_P(GridTest, MatchesDirectAlltoallv) {
    int const trials = GetParam() == TransportKind::inproc ? 10 : 2;
    int const max_p  = GetParam() == TransportKind::inproc ? 16 : 8;
    for (int p = 1; p <= max_p; ++p) {
        std::mt19937_64 gen(static_cast<std::uint64_t>(p) * 7);
        std::vector<std::vector<std::vector<int>>> matrices;
        for (int trial = 0; trial < trials; ++trial) {
            matrices.push_back(random_count_matrix(p, gen));
        }
        run_ranks(p, GetParam(), [&](Communicator& comm) {
            GridTopology const topo(p);
            int const          r = comm.rank();
            for (auto const& m: matrices) {
                auto const buf    = matrix_send_buffer(m, r);
                auto const counts = m[static_cast<std::size_t>(r)];
                auto [grid_data, grid_counts] = grid_alltoallv(comm, topo, buf, counts);
                auto [direct_data, direct_counts] =
                    comm.alltoallv(send_buf(buf), send_counts(counts), recv_counts_out());
                EXPECT_EQ(grid_data, direct_data);
                EXPECT_EQ(grid_counts, direct_counts);
                EXPECT_EQ(grid_data, matrix_expected(m, r));
            }
        });
    }
}

TEST_P(GridTest, FewerDistinctDestinationsThanDirect) {
    int const                                   p = GetParam() == TransportKind::inproc ? 16 : 9;
    PerRank<std::pair<std::uint64_t, std::uint64_t>> distinct(p);
    run_ranks(p, GetParam(), [&](Communicator& comm) {
        GridTopology const topo(p);
        std::vector<int>   counts(static_cast<std::size_t>(p), 1);
        std::vector<int>   buf(static_cast<std::size_t>(p), comm.rank());
        auto const         grid   = measure(comm, [&] { grid_alltoallv(comm, topo, buf, counts); });
        auto const         direct = measure(comm, [&] { comm.alltoallv(send_buf(buf), send_counts(counts), recv_counts(counts)); });
        distinct.set(comm.rank(), {grid.distinct_destinations, direct.distinct_destinations});
    }, AssertionLevel::none);
    GridTopology const topo(p);
    for (auto const& [grid, direct]: distinct.all()) {
        EXPECT_LE(grid, static_cast<std::uint64_t>((topo.columns - 1) + (topo.rows - 1)));
        EXPECT_EQ(direct, static_cast<std::uint64_t>(p - 1));
    }
}

TEST_P(GridTest, BytesAreConserved) {
    int const p = 6;
    run_ranks(p, GetParam(), [&](Communicator& comm) {
        std::mt19937_64 gen(static_cast<std::uint64_t>(comm.rank()));
        std::vector<int> counts(static_cast<std::size_t>(p));
        for (auto& c: counts) {
            c = static_cast<int>(gen() % 5);
        }
        std::vector<std::int64_t> buf(static_cast<std::size_t>(std::accumulate(counts.begin(), counts.end(), 0)), 1);
        auto [data, rc] = grid_alltoallv(comm, GridTopology(p), buf, counts);
        auto const sent_total = comm.allreduce(send_buf(static_cast<std::int64_t>(buf.size())), op(ops::plus{}));
        auto const recv_total = comm.allreduce(send_buf(static_cast<std::int64_t>(data.size())), op(ops::plus{}));
        EXPECT_EQ(sent_total, recv_total);
    });
}

TEST_P(GridTest, RejectsMismatchedInputs) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        EXPECT_THROW(grid_alltoallv(comm, GridTopology(2), std::vector<int>{1}, std::vector<int>{1}), CountsError);
        EXPECT_THROW(grid_alltoallv(comm, GridTopology(3), std::vector<int>{1}, std::vector<int>{1, 0}), UsageError);
        EXPECT_THROW(grid_alltoallv(comm, GridTopology(2), std::vector<int>{1}, std::vector<int>{1, 1}), CountsError);
    });
}

INSTANTIATE_TEST_SUITE_P(Kinds, GridTest, ::testing::Values(TransportKind::inproc, TransportKind::tcp), transport_name);
