#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "xcomm/communicator.hpp"

// Untyped building blocks of the collectives. Element types are handled by the templates in
// collectives.hpp; everything here moves bytes.
namespace xcomm::detail {

/// Binomial-tree broadcast. When every rank already knows the payload size, pass it as `known_size`; an
/// empty payload then sends nothing.
Bytes bcast_bytes(Communicator const& comm, Bytes data, int root, std::optional<std::size_t> known_size = {});

/// Direct gather: every non-root with a non-empty contribution sends one envelope to `root`.
/// `byte_counts` is consulted on the root only. Returns the rank-ordered concatenation on the root, empty
/// elsewhere.
Bytes gatherv_bytes(
    Communicator const& comm, std::span<std::byte const> local, int root, std::span<std::size_t const> byte_counts,
    InternalTag tag = InternalTag::gather
);

/// Gather to rank 0 followed by a broadcast of the concatenation.
Bytes allgatherv_bytes(
    Communicator const& comm, std::span<std::byte const> local, std::span<std::size_t const> byte_counts
);

/// Byte offsets and lengths of one segment per rank.
struct Segments {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> lengths;
};

/// Direct personalized exchange: one envelope per non-empty, non-self segment. The self segment is copied.
void alltoallv_bytes(
    Communicator const& comm, std::span<std::byte const> send, Segments const& send_segments, std::span<std::byte> recv,
    Segments const& recv_segments
);

} // namespace xcomm::detail
