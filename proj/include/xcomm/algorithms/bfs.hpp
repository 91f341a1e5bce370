#pragma once

#include <string>
#include <vector>

#include "xcomm/algorithms/graph.hpp"
#include "xcomm/communicator.hpp"

namespace xcomm {

/// How BFS frontiers travel between ranks.
enum class ExchangeStrategy {
    direct, ///< Communicator::alltoallv
    sparse, ///< sparse_alltoall (NBX)
    grid,   ///< grid_alltoallv (two hops)
};

std::string      to_string(ExchangeStrategy strategy);
ExchangeStrategy parse_exchange_strategy(std::string const& name);

/// Level-synchronous BFS. Returns the hop distance of every local vertex, `unreached` where there is no path.
std::vector<Distance> bfs(
    Communicator const& comm, DistGraph const& graph, VertexId source,
    ExchangeStrategy strategy = ExchangeStrategy::direct
);

} // namespace xcomm
