#include "xcomm/plugins/reproducible_reduce.hpp"

#include <algorithm>
#include <bit>

namespace xcomm {

Distribution::Distribution(std::vector<int> c) : counts(std::move(c)) {
    if (counts.empty()) {
        throw UsageError("distribution: no ranks");
    }
    displs.resize(counts.size());
    std::int64_t sum = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 0) {
            throw CountsError("distribution: negative count for rank " + std::to_string(i));
        }
        displs[i] = static_cast<int>(sum);
        sum += counts[i];
    }
    n = sum;
}

Distribution Distribution::even(std::int64_t n, int p) {
    std::vector<int> counts(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
        counts[static_cast<std::size_t>(i)] = static_cast<int>(n / p + (i < n % p ? 1 : 0));
    }
    return Distribution(std::move(counts));
}

int Distribution::owner(std::int64_t i) const {
    if (i < 0 || i >= n) {
        throw UsageError("distribution: index " + std::to_string(i) + " out of range");
    }
    // Empty ranks share their displacement with the next rank, so the last match is the one holding i.
    auto const it = std::upper_bound(displs.begin(), displs.end(), i, [](std::int64_t v, int d) { return v < d; });
    return static_cast<int>(it - displs.begin()) - 1;
}

std::int64_t TreeNode::split() const noexcept {
    auto const size = static_cast<std::uint64_t>(hi - lo);
    return static_cast<std::int64_t>(std::bit_floor(size - 1));
}

namespace {

struct TopNode {
    TreeNode node;
    int      destination; ///< owner of the parent's leftmost leaf; -1 for the root
};

void collect_top_nodes(
    Distribution const& dist, int rank, TreeNode node, int parent_owner, std::vector<TopNode>& out
) {
    std::int64_t const first = dist.displs[static_cast<std::size_t>(rank)];
    std::int64_t const last  = first + dist.counts[static_cast<std::size_t>(rank)];
    if (node.hi <= first || node.lo >= last) {
        return;
    }
    if (node.lo >= first) {
        out.push_back({node, parent_owner});
        return;
    }
    int const owner = dist.owner(node.lo);
    collect_top_nodes(dist, rank, node.left(), owner, out);
    collect_top_nodes(dist, rank, node.right(), owner, out);
}

std::vector<TopNode> top_nodes_of(Distribution const& dist, int rank) {
    std::vector<TopNode> out;
    collect_top_nodes(dist, rank, TreeNode{0, dist.n}, -1, out);
    return out;
}

} // namespace

ReducePlan make_reduce_plan(Distribution const& dist, int rank) {
    ReducePlan plan;
    if (dist.n == 0) {
        return plan;
    }
    for (auto const& top: top_nodes_of(dist, rank)) {
        plan.top_nodes.push_back(top.node);
        if (top.destination >= 0) {
            plan.outgoing[top.destination].push_back(top.node);
        } else {
            plan.holds_root = true;
            if (rank != 0) {
                plan.outgoing[0].push_back(top.node);
            }
        }
    }
    for (int s = rank + 1; s < dist.size(); ++s) {
        auto const tops = top_nodes_of(dist, s);
        if (std::any_of(tops.begin(), tops.end(), [&](TopNode const& t) { return t.destination == rank; })) {
            plan.sources.push_back(s);
        }
    }
    return plan;
}

} // namespace xcomm
