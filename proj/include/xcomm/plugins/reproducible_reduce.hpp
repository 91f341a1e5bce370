#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "xcomm/communicator.hpp"
#include "xcomm/datatypes.hpp"

namespace xcomm {

/// Contiguous block layout of a global array: rank i holds [displs[i], displs[i] + counts[i]).
struct Distribution {
    std::vector<int> counts;
    std::vector<int> displs;
    std::int64_t     n = 0;

    Distribution() = default;
    explicit Distribution(std::vector<int> counts);

    /// Near-even blocks, the first n % p ranks one element larger.
    static Distribution even(std::int64_t n, int p);

    int size() const noexcept {
        return static_cast<int>(counts.size());
    }
    /// Rank holding global index `i`.
    int owner(std::int64_t i) const;
};

/// Node [lo, hi) of the fixed reduction tree; splits at the largest power of two strictly below hi - lo.
struct TreeNode {
    std::int64_t lo;
    std::int64_t hi;

    std::int64_t split() const noexcept;
    TreeNode     left() const noexcept {
        return {lo, lo + split()};
    }
    TreeNode right() const noexcept {
        return {lo + split(), hi};
    }
    bool is_leaf() const noexcept {
        return hi - lo == 1;
    }
    friend bool operator==(TreeNode const&, TreeNode const&) = default;
    friend auto operator<=>(TreeNode const&, TreeNode const&) = default;
};

/// Communication plan of one rank for a given distribution.
struct ReducePlan {
    std::vector<TreeNode>         top_nodes;     ///< nodes this rank computes and hands to another rank
    std::map<int, std::vector<TreeNode>> outgoing; ///< destination -> nodes, ascending
    std::vector<int>              sources;       ///< ranks this rank receives one batch from, ascending
    bool                          holds_root = false;
};

ReducePlan make_reduce_plan(Distribution const& dist, int rank);

/// Sequential reference: folds `values` in tree order.
template <typename T, typename Op>
T canonical_tree_reduce(std::span<T const> values, Op op) {
    if (values.empty()) {
        throw UsageError("canonical_tree_reduce: no elements");
    }
    auto fold = [&](auto&& self, TreeNode node) -> T {
        if (node.is_leaf()) {
            return values[static_cast<std::size_t>(node.lo)];
        }
        T left = self(self, node.left());
        return op(left, self(self, node.right()));
    };
    return fold(fold, TreeNode{0, static_cast<std::int64_t>(values.size())});
}

template <typename T, typename Op>
T canonical_tree_reduce(std::vector<T> const& values, Op op) {
    return canonical_tree_reduce(std::span<T const>(values), std::move(op));
}

/// Reduction in the fixed tree order over the global array distributed by `dist`. The result is bitwise
/// the same for every number of ranks and every distribution; it is returned on rank 0 only.
template <FixedWidth T, typename Op>
std::optional<T> reproducible_reduce(
    Communicator const& comm, std::span<T const> local, Distribution const& dist, Op op
) {
    if (dist.size() != comm.size()) {
        throw CountsError("reproducible_reduce: distribution has " + std::to_string(dist.size()) + " ranks");
    }
    if (dist.n == 0) {
        throw UsageError("reproducible_reduce: no elements");
    }
    int const rank = comm.rank();
    if (static_cast<int>(local.size()) != dist.counts[static_cast<std::size_t>(rank)]) {
        throw CountsError(
            "reproducible_reduce: local block holds " + std::to_string(local.size()) + " elements, distribution says "
            + std::to_string(dist.counts[static_cast<std::size_t>(rank)])
        );
    }
    auto const          plan  = make_reduce_plan(dist, rank);
    auto const          tag   = comm.internal_tag(InternalTag::reproducible);
    constexpr auto      width = Codec<T>::element_width;
    std::int64_t const  first = dist.displs[static_cast<std::size_t>(rank)];
    std::int64_t const  last  = first + static_cast<std::int64_t>(local.size());

    // Partials from higher ranks: [i64 lo][i64 hi][value] per node.
    std::map<TreeNode, T> partials;
    for (int src: plan.sources) {
        auto const env = comm.recv_raw(src, TagFilter::exact(tag));
        auto const rec = 2 * sizeof(std::int64_t) + width;
        if (env.payload.size() % rec != 0) {
            throw DecodeError("reproducible_reduce: malformed partial batch");
        }
        for (std::size_t pos = 0; pos < env.payload.size(); pos += rec) {
            TreeNode node{
                detail::load_le<std::int64_t>(env.payload.data() + pos),
                detail::load_le<std::int64_t>(env.payload.data() + pos + sizeof(std::int64_t))};
            partials.emplace(node, Codec<T>::read(env.payload.data() + pos + 2 * sizeof(std::int64_t)));
        }
    }

    auto compute = [&](auto&& self, TreeNode node) -> T {
        if (node.is_leaf()) {
            return local[static_cast<std::size_t>(node.lo - first)];
        }
        T    left  = self(self, node.left());
        auto right = node.right();
        if (right.lo < last) {
            return op(left, self(self, right));
        }
        auto it = partials.find(right);
        if (it == partials.end()) {
            throw Error("reproducible_reduce: missing partial for a tree node");
        }
        return op(left, it->second);
    };
    std::map<TreeNode, T> computed;
    for (auto const& node: plan.top_nodes) {
        computed.emplace(node, compute(compute, node));
    }
    for (auto const& [dst, nodes]: plan.outgoing) {
        Bytes batch(nodes.size() * (2 * sizeof(std::int64_t) + width));
        auto* cursor = batch.data();
        for (auto const& node: nodes) {
            detail::store_le(node.lo, cursor);
            detail::store_le(node.hi, cursor + sizeof(std::int64_t));
            Codec<T>::write(computed.at(node), cursor + 2 * sizeof(std::int64_t));
            cursor += 2 * sizeof(std::int64_t) + width;
        }
        comm.send_raw(dst, tag, std::move(batch));
    }
    if (plan.holds_root && rank == 0) {
        return computed.at(TreeNode{0, dist.n});
    }
    if (rank == 0) {
        auto const env = comm.recv_raw(dist.owner(0), TagFilter::exact(tag));
        return Codec<T>::read(env.payload.data() + 2 * sizeof(std::int64_t));
    }
    return std::nullopt;
}

template <FixedWidth T, typename Op>
std::optional<T> reproducible_reduce(
    Communicator const& comm, std::vector<T> const& local, Distribution const& dist, Op op
) {
    return reproducible_reduce<T>(comm, std::span<T const>(local), dist, std::move(op));
}

} // namespace xcomm
