#pragma once

#include <span>
#include <vector>

#include "xcomm/communicator.hpp"
#include "xcomm/datatypes.hpp"
#include "xcomm/params.hpp"

namespace xcomm {

/// Virtual c x r grid over the ranks of a communicator: c = ceil(sqrt(p)) columns, r = ceil(p / c) rows,
/// rank k at (k / c, k % c). All rows but the last are complete.
struct GridTopology {
    int p = 1;
    int columns = 1;
    int rows    = 1;

    GridTopology() = default;
    explicit GridTopology(int size);

    int row_of(int rank) const noexcept {
        return rank / columns;
    }
    int column_of(int rank) const noexcept {
        return rank % columns;
    }
    /// Rank at (row, column), or -1 when the position is empty.
    int rank_at(int row, int column) const noexcept;
    /// Number of ranks in `row`.
    int row_width(int row) const noexcept;

    /// Ranks of `rank`'s row and column, ascending.
    std::vector<int> row_members(int row) const;
    std::vector<int> column_members(int column) const;

    /// Rank forwarding messages from `s` to `d`: (row(s), col(d)) when it exists, otherwise
    /// (row(s) - 1, col(d)).
    int intermediate_of(int s, int d) const noexcept;

    /// Ranks `rank` sends to in the first hop (itself included), ascending.
    std::vector<int> hop1_targets(int rank) const;
    /// Ranks that send to `rank` in the first hop (itself included), ascending.
    std::vector<int> hop1_sources(int rank) const;
};

/// Grid topology of a communicator, with row and column sub-communicators.
struct Grid {
    GridTopology topology;
    Communicator row;
    Communicator column;
};

/// Collective.
Grid build_grid(Communicator const& comm);

namespace detail {

/// Two-hop exchange over raw bytes: `segments[d]` goes to rank d. Returns one byte string per origin rank.
std::vector<Bytes> grid_exchange_bytes(
    Communicator const& comm, GridTopology const& topology, std::vector<std::span<std::byte const>> const& segments
);

} // namespace detail

/// Indirect alltoallv: the same result as Communicator::alltoallv with packed send displacements, routed
/// in two hops so each rank talks to at most (c - 1) + (r - 1) other ranks. Returns (payload, recv_counts).
template <FixedWidth T>
ResultBundle<T, 1> grid_alltoallv(
    Communicator const& comm, GridTopology const& topology, std::span<T const> data, std::span<int const> send_counts
) {
    auto const p = static_cast<std::size_t>(comm.size());
    if (send_counts.size() != p) {
        throw CountsError(
            "grid_alltoallv: send_counts has " + std::to_string(send_counts.size()) + " entries, expected "
            + std::to_string(p)
        );
    }
    if (topology.p != comm.size()) {
        throw UsageError("grid_alltoallv: topology was built for a different communicator size");
    }
    auto const send_displs = exclusive_prefix_sum(send_counts, "grid_alltoallv send_displs");
    for (std::size_t d = 0; d < p; ++d) {
        if (send_counts[d] < 0) {
            throw CountsError("grid_alltoallv: send_counts[" + std::to_string(d) + "] is negative");
        }
    }
    if (static_cast<std::size_t>(send_displs.back() + send_counts.back()) > data.size()) {
        throw CountsError("grid_alltoallv: send counts exceed send_buf");
    }
    Bytes const                             encoded = encode(data);
    constexpr auto                          width   = Codec<T>::element_width;
    std::vector<std::span<std::byte const>> segments(p);
    for (std::size_t d = 0; d < p; ++d) {
        segments[d] = std::span<std::byte const>(encoded).subspan(
            static_cast<std::size_t>(send_displs[d]) * width, static_cast<std::size_t>(send_counts[d]) * width
        );
    }
    auto const       per_origin = detail::grid_exchange_bytes(comm, topology, segments);
    std::vector<T>   payload;
    std::vector<int> recv_counts(p);
    for (std::size_t s = 0; s < p; ++s) {
        auto values    = decode<T>(per_origin[s]);
        recv_counts[s] = static_cast<int>(values.size());
        payload.insert(payload.end(), values.begin(), values.end());
    }
    return ResultBundle<T, 1>(std::move(payload), {std::pair{ParamKind::recv_counts, std::move(recv_counts)}});
}

template <FixedWidth T>
ResultBundle<T, 1> grid_alltoallv(
    Communicator const& comm, GridTopology const& topology, std::vector<T> const& data,
    std::vector<int> const& send_counts
) {
    return grid_alltoallv<T>(comm, topology, std::span<T const>(data), std::span<int const>(send_counts));
}

} // namespace xcomm
