#include "xcomm/algorithms/bfs.hpp"

#include <map>

#include "xcomm/collectives.hpp"
#include "xcomm/plugins/grid_alltoall.hpp"
#include "xcomm/plugins/sparse_alltoall.hpp"

namespace xcomm {

std::string to_string(ExchangeStrategy strategy) {
    switch (strategy) {
        case ExchangeStrategy::direct:
            return "direct";
        case ExchangeStrategy::sparse:
            return "sparse";
        case ExchangeStrategy::grid:
            return "grid";
    }
    return "?";
}

ExchangeStrategy parse_exchange_strategy(std::string const& name) {
    if (name == "direct") {
        return ExchangeStrategy::direct;
    }
    if (name == "sparse") {
        return ExchangeStrategy::sparse;
    }
    if (name == "grid") {
        return ExchangeStrategy::grid;
    }
    throw UsageError("unknown strategy '" + name + "' (expected direct, sparse or grid)");
}

namespace {

using Discoveries = std::map<int, std::vector<VertexId>>;

std::vector<VertexId> exchange(
    Communicator const& comm, Discoveries const& outgoing, ExchangeStrategy strategy, GridTopology const& topology
) {
    switch (strategy) {
        case ExchangeStrategy::direct:
            return with_flattened(outgoing, comm.size()).call([&](auto... flattened) {
                return std::vector<VertexId>(comm.alltoallv(std::move(flattened)...));
            });
        case ExchangeStrategy::sparse: {
            std::vector<VertexId> out;
            for (auto const& [src, msg]: sparse_alltoall(comm, outgoing)) {
                out.insert(out.end(), msg.begin(), msg.end());
            }
            return out;
        }
        case ExchangeStrategy::grid: {
            auto flat = with_flattened(outgoing, comm.size());
            return grid_alltoallv(comm, topology, flat.buffer, flat.send_counts).extract_recv_buf();
        }
    }
    return {};
}

} // namespace

std::vector<Distance> bfs(Communicator const& comm, DistGraph const& graph, VertexId source, ExchangeStrategy strategy) {
    if (source < 0 || source >= graph.global_size()) {
        throw UsageError("bfs: source vertex " + std::to_string(source) + " out of range");
    }
    GridTopology const   topology(comm.size());
    auto const           n_local = static_cast<std::size_t>(graph.local_size());
    VertexId const       first   = graph.first();
    std::vector<Distance> dist(n_local, unreached);
    std::vector<std::uint8_t> visited(n_local, 0);
    std::vector<std::int64_t> frontier;

    if (graph.owner(source) == comm.rank()) {
        auto const local = static_cast<std::size_t>(source - first);
        dist[local]      = 0;
        visited[local]   = 1;
        frontier.push_back(static_cast<std::int64_t>(local));
    }

    for (Distance level = 0;; ++level) {
        Discoveries outgoing;
        for (auto u: frontier) {
            for (auto v: graph.neighbors_of(u)) {
                int const owner = graph.owner(v);
                if (owner == comm.rank() && visited[static_cast<std::size_t>(v - first)]) {
                    continue;
                }
                outgoing[owner].push_back(v);
            }
        }
        frontier.clear();
        for (auto v: exchange(comm, outgoing, strategy, topology)) {
            auto const local = static_cast<std::size_t>(v - first);
            if (!visited[local]) {
                visited[local] = 1;
                dist[local]    = level + 1;
                frontier.push_back(static_cast<std::int64_t>(local));
            }
        }
        std::vector<std::uint8_t> const idle{static_cast<std::uint8_t>(frontier.empty() ? 1 : 0)};
        std::vector<std::uint8_t> const all_idle = comm.allreduce(send_buf(idle), op(ops::logical_and{}));
        if (all_idle[0]) {
            break;
        }
    }
    return dist;
}

} // namespace xcomm
