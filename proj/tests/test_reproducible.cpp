#include <cmath>
#include <numeric>
#include <bit>
#include <random>

#include "support.hpp"
#include "xcomm/plugins/reproducible_reduce.hpp"

using namespace xcomm;
using namespace xcomm::testing;

namespace {

class ReproducibleTest : public TransportTest {};

std::uint64_t bits(double x) {
    return std::bit_cast<std::uint64_t>(x);
}

/// Random contiguous split of n elements over p ranks; empty blocks allowed.
Distribution random_distribution(std::int64_t n, int p, std::mt19937_64& gen) {
    std::vector<std::int64_t> cuts{0, n};
    for (int i = 0; i + 1 < p; ++i) {
        cuts.push_back(static_cast<std::int64_t>(gen() % static_cast<std::uint64_t>(n + 1)));
    }
    std::sort(cuts.begin(), cuts.end());
    std::vector<int> counts;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        counts.push_back(static_cast<int>(cuts[i + 1] - cuts[i]));
    }
    return Distribution(counts);
}

/// Runs the distributed reduction; returns rank 0's result and the total payload envelopes sent.
std::pair<double, std::uint64_t> distributed_sum(std::vector<double> const& values, Distribution const& dist,
                                                 TransportKind kind) {
    int const              p = dist.size();
    PerRank<std::uint64_t> sent(p);
    double                 result = 0;
    run_ranks(p, kind, [&](Communicator& comm) {
        auto const        r     = static_cast<std::size_t>(comm.rank());
        auto const        first = values.begin() + dist.displs[r];
        std::vector<double> local(first, first + dist.counts[r]);
        std::optional<double> got;
        auto const stats = measure(comm, [&] { got = reproducible_reduce(comm, local, dist, ops::plus{}); });
        sent.set(comm.rank(), stats.messages_sent);
        if (comm.rank() == 0) {
            EXPECT_TRUE(got.has_value());
            result = got.value_or(0);
        } else {
            EXPECT_FALSE(got.has_value());
        }
    }, AssertionLevel::none);
    std::uint64_t total = 0;
    for (auto n: sent.all()) {
        total += n;
    }
    return {result, total};
}

std::vector<double> adversarial(int k) {
    std::vector<double> v;
    for (int i = 0; i < k; ++i) {
        v.insert(v.end(), {1e16, 1.0, -1e16, 1.0});
    }
    return v;
}

} // namespace

TEST(TreeShape, Splits) {
    EXPECT_EQ((TreeNode{0, 7}.split()), 4);
    EXPECT_EQ((TreeNode{0, 4}.split()), 2);
    EXPECT_EQ((TreeNode{4, 7}.split()), 2);
    EXPECT_EQ((TreeNode{0, 2}.split()), 1);
    EXPECT_EQ((TreeNode{0, 9}.split()), 8);
}

TEST(CanonicalTree, SmallOracles) {
    EXPECT_EQ(canonical_tree_reduce(std::vector<double>{2.5}, ops::plus{}), 2.5);
    EXPECT_EQ(canonical_tree_reduce(std::vector<double>{1, 2, 3, 4}, ops::plus{}), 10.0);
    std::mt19937_64                        gen(1);
    std::uniform_real_distribution<double> real(-1e10, 1e10);
    std::vector<double>                    e(7);
    for (auto& x: e) {
        x = real(gen);
    }
    double const expected = ((e[0] + e[1]) + (e[2] + e[3])) + ((e[4] + e[5]) + e[6]);
    EXPECT_EQ(bits(canonical_tree_reduce(e, ops::plus{})), bits(expected));
    EXPECT_THROW(canonical_tree_reduce(std::vector<double>{}, ops::plus{}), UsageError);
}

TEST(CanonicalTree, RecordsOperandOrder) {
    // With string concatenation as the operation the result spells out the bracketing.
    std::vector<std::string> leaves{"a", "b", "c", "d", "e", "f", "g"};
    auto bracket = [](std::string const& l, std::string const& r) { return "(" + l + r + ")"; };
    EXPECT_EQ(canonical_tree_reduce(std::span<std::string const>(leaves), bracket), "(((ab)(cd))((ef)g))");
}

TEST(DistributionTest, EvenAndOwner) {
    auto const d = Distribution::even(7, 3);
    EXPECT_EQ(d.counts, (std::vector<int>{3, 2, 2}));
    EXPECT_EQ(d.displs, (std::vector<int>{0, 3, 5}));
    EXPECT_EQ(d.n, 7);
    EXPECT_EQ(d.owner(0), 0);
    EXPECT_EQ(d.owner(3), 1);
    EXPECT_EQ(d.owner(6), 2);
    Distribution gaps(std::vector<int>{0, 2, 0, 1});
    EXPECT_EQ(gaps.owner(0), 1);
    EXPECT_EQ(gaps.owner(2), 3);
}

TEST(ReducePlanTest, SevenOverThree) {
    Distribution const d(std::vector<int>{3, 2, 2});
    auto const         p0 = make_reduce_plan(d, 0);
    auto const         p1 = make_reduce_plan(d, 1);
    auto const         p2 = make_reduce_plan(d, 2);
    // [4,7) splits into [4,6) and [6,7), so rank 2's block [5,7) holds two separate leaves.
    EXPECT_EQ(p2.top_nodes, (std::vector<TreeNode>{{5, 6}, {6, 7}}));
    EXPECT_EQ(p2.outgoing, (std::map<int, std::vector<TreeNode>>{{1, {{5, 6}, {6, 7}}}}));
    EXPECT_EQ(p1.top_nodes, (std::vector<TreeNode>{{3, 4}, {4, 7}}));
    EXPECT_EQ(p1.outgoing, (std::map<int, std::vector<TreeNode>>{{0, {{3, 4}, {4, 7}}}}));
    EXPECT_EQ(p1.sources, (std::vector<int>{2}));
    EXPECT_EQ(p0.sources, (std::vector<int>{1}));
    EXPECT_EQ(p0.top_nodes, (std::vector<TreeNode>{{0, 7}}));
    EXPECT_TRUE(p0.outgoing.empty());
}

TEST_P(ReproducibleTest, SevenElementsOverThreeRanks) {
    std::mt19937_64                        gen(2);
    std::uniform_real_distribution<double> real(-1, 1);
    std::vector<double>                    values(7);
    for (auto& x: values) {
        x = real(gen) * std::pow(10.0, static_cast<double>(gen() % 30));
    }
    auto const [got, sent] = distributed_sum(values, Distribution(std::vector<int>{3, 2, 2}), GetParam());
    EXPECT_EQ(bits(got), bits(canonical_tree_reduce(values, ops::plus{})));
    EXPECT_LE(sent, 4u);
}

TEST_P(ReproducibleTest, BitIdenticalAcrossRanksAndDistributions) {
    std::mt19937_64                        gen(3);
    std::uniform_real_distribution<double> real(-1, 1);
    std::vector<double>                    values(257);
    for (auto& x: values) {
        x = real(gen) * std::pow(10.0, static_cast<double>(gen() % 40) - 20);
    }
    std::vector<double> adv = adversarial(16);
    for (auto const* input: {&values, &adv}) {
        auto const oracle = bits(canonical_tree_reduce(*input, ops::plus{}));
        auto const n      = static_cast<std::int64_t>(input->size());
        for (int p: {1, 2, 3, 4, 5, 7, 8}) {
            std::vector<Distribution> dists;
            dists.push_back(Distribution::even(n, p));
            for (int i = 0; i < 5; ++i) {
                dists.push_back(random_distribution(n, p, gen));
            }
            for (auto const& d: dists) {
                auto const [got, sent] = distributed_sum(*input, d, GetParam());
                EXPECT_EQ(bits(got), oracle) << "p=" << p;
                EXPECT_LE(sent, static_cast<std::uint64_t>(2 * (p - 1))) << "p=" << p;
            }
        }
    }
}

TEST_P(ReproducibleTest, IntegerSumEqualsPlainReduce) {
    int const p = 5;
    auto const dist = Distribution::even(40, p);
    run_ranks(p, GetParam(), [&](Communicator& comm) {
        auto const r = static_cast<std::size_t>(comm.rank());
        std::vector<std::int64_t> local;
        for (int i = 0; i < dist.counts[r]; ++i) {
            local.push_back((dist.displs[r] + i) * 37 % 11);
        }
        std::int64_t mine = std::accumulate(local.begin(), local.end(), std::int64_t{0});
        auto const plain = comm.reduce(send_buf(mine), op(ops::plus{}));
        auto const fixed = reproducible_reduce(comm, local, dist, ops::plus{});
        if (comm.rank() == 0) {
            EXPECT_EQ(plain, std::vector<std::int64_t>{*fixed});
        }
    });
}

TEST_P(ReproducibleTest, RejectsBadInput) {
    run_ranks(2, GetParam(), [](Communicator& comm) {
        std::vector<double> local(3);
        EXPECT_THROW(reproducible_reduce(comm, local, Distribution::even(6, 3), ops::plus{}), CountsError);
        EXPECT_THROW(reproducible_reduce(comm, local, Distribution(std::vector<int>{1, 1}), ops::plus{}), CountsError);
    });
}

INSTANTIATE_TEST_SUITE_P(Kinds, ReproducibleTest, ::testing::Values(TransportKind::inproc, TransportKind::tcp), transport_name);
