#pragma once

#include <utility>
#include <vector>

#include "xcomm/communicator.hpp"
#include "xcomm/datatypes.hpp"

namespace xcomm {

namespace detail {

/// NBX over raw bytes. Returns (source, payload) pairs, stably sorted by source.
std::vector<std::pair<int, Bytes>> sparse_exchange_bytes(
    Communicator const& comm, std::vector<std::pair<int, Bytes>> sends
);

} // namespace detail

template <typename T>
using SparseMessages = std::vector<std::pair<int, std::vector<T>>>;

/// Dynamic sparse exchange: delivers every (destination, message) pair without any rank knowing what it
/// will receive. Messages to the same destination stay distinct and keep their order. Result: (source,
/// message) pairs ordered by source, then arrival.
///
/// `messages` is any range of (rank, vector<T>) pairs, e.g. a std::map or SparseMessages<T>.
template <typename Container>
auto sparse_alltoall(Communicator const& comm, Container const& messages) {
    using Messages = std::remove_cvref_t<decltype(std::begin(messages)->second)>;
    using T        = typename Messages::value_type;
    static_assert(FixedWidth<T>, "sparse_alltoall takes fixed-width elements");

    std::vector<std::pair<int, Bytes>> sends;
    for (auto const& [dst, msg]: messages) {
        comm.check_rank(static_cast<int>(dst), "destination");
        sends.emplace_back(static_cast<int>(dst), encode(std::span<T const>(msg.data(), msg.size())));
    }
    SparseMessages<T> out;
    for (auto& [src, bytes]: detail::sparse_exchange_bytes(comm, std::move(sends))) {
        out.emplace_back(src, decode<T>(bytes));
    }
    return out;
}

} // namespace xcomm
