#include "xcomm/byte_collectives.hpp"

#include <algorithm>
#include <numeric>

namespace xcomm::detail {

Bytes bcast_bytes(Communicator const& comm, Bytes data, int root, std::optional<std::size_t> known_size) {
    comm.check_rank(root, "root");
    int const p = comm.size();
    if (p == 1 || (known_size && *known_size == 0)) {
        return data;
    }
    auto const tag      = comm.internal_tag(InternalTag::bcast);
    int const  relative = (comm.rank() - root + p) % p;

    int mask = 1;
    while (mask < p) {
        if (relative & mask) {
            int const parent = (relative - mask + root) % p;
            data             = comm.recv_raw(parent, TagFilter::exact(tag)).payload;
            break;
        }
        mask <<= 1;
    }
    mask >>= 1;
    while (mask > 0) {
        if (relative + mask < p) {
            comm.send_raw((relative + mask + root) % p, tag, data);
        }
        mask >>= 1;
    }
    return data;
}

Bytes gatherv_bytes(
    Communicator const& comm, std::span<std::byte const> local, int root, std::span<std::size_t const> byte_counts,
    InternalTag code
) {
    comm.check_rank(root, "root");
    auto const tag = comm.internal_tag(code);
    if (comm.rank() != root) {
        if (!local.empty()) {
            comm.send_raw(root, tag, Bytes(local.begin(), local.end()));
        }
        return {};
    }
    auto const total = std::accumulate(byte_counts.begin(), byte_counts.end(), std::size_t{0});
    Bytes      out;
    out.reserve(total);
    for (int src = 0; src < comm.size(); ++src) {
        auto const expected = byte_counts[static_cast<std::size_t>(src)];
        if (src == root) {
            if (local.size() != expected) {
                throw CountsError(
                    "gather: root contributes " + std::to_string(local.size()) + " bytes but expects "
                    + std::to_string(expected)
                );
            }
            out.insert(out.end(), local.begin(), local.end());
            continue;
        }
        if (expected == 0) {
            continue;
        }
        auto env = comm.recv_raw(src, TagFilter::exact(tag));
        if (env.payload.size() != expected) {
            throw CountsError(
                "gather: rank " + std::to_string(src) + " sent " + std::to_string(env.payload.size())
                + " bytes, expected " + std::to_string(expected)
            );
        }
        out.insert(out.end(), env.payload.begin(), env.payload.end());
    }
    return out;
}

Bytes allgatherv_bytes(
    Communicator const& comm, std::span<std::byte const> local, std::span<std::size_t const> byte_counts
) {
    auto gathered    = gatherv_bytes(comm, local, 0, byte_counts);
    auto const total = std::accumulate(byte_counts.begin(), byte_counts.end(), std::size_t{0});
    return bcast_bytes(comm, std::move(gathered), 0, total);
}

void alltoallv_bytes(
    Communicator const& comm, std::span<std::byte const> send, Segments const& send_segments, std::span<std::byte> recv,
    Segments const& recv_segments
) {
    auto const p    = static_cast<std::size_t>(comm.size());
    auto const self = static_cast<std::size_t>(comm.rank());
    auto const tag  = comm.internal_tag(InternalTag::alltoall);

    for (std::size_t dst = 0; dst < p; ++dst) {
        auto const len = send_segments.lengths[dst];
        if (dst == self || len == 0) {
            continue;
        }
        auto const first = send.begin() + static_cast<std::ptrdiff_t>(send_segments.offsets[dst]);
        comm.send_raw(static_cast<int>(dst), tag, Bytes(first, first + static_cast<std::ptrdiff_t>(len)));
    }

    if (send_segments.lengths[self] != recv_segments.lengths[self]) {
        throw CountsError(
            "alltoallv: rank " + std::to_string(self) + " sends " + std::to_string(send_segments.lengths[self])
            + " bytes to itself but expects " + std::to_string(recv_segments.lengths[self])
        );
    }
    std::copy_n(
        send.begin() + static_cast<std::ptrdiff_t>(send_segments.offsets[self]), send_segments.lengths[self],
        recv.begin() + static_cast<std::ptrdiff_t>(recv_segments.offsets[self])
    );

    for (std::size_t src = 0; src < p; ++src) {
        auto const len = recv_segments.lengths[src];
        if (src == self || len == 0) {
            continue;
        }
        auto env = comm.recv_raw(static_cast<int>(src), TagFilter::exact(tag));
        if (env.payload.size() != len) {
            throw CountsError(
                "alltoallv: rank " + std::to_string(src) + " sent " + std::to_string(env.payload.size())
                + " bytes, expected " + std::to_string(len)
            );
        }
        std::copy(
            env.payload.begin(), env.payload.end(), recv.begin() + static_cast<std::ptrdiff_t>(recv_segments.offsets[src])
        );
    }
}

} // namespace xcomm::detail
