#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xcomm/plugins/reproducible_reduce.hpp"

namespace xcomm {

using VertexId = std::int64_t;
using Distance = std::uint64_t;

inline constexpr Distance unreached = std::numeric_limits<Distance>::max();

enum class GraphKind { ring, grid2d, gnm };

std::string to_string(GraphKind kind);
GraphKind   parse_graph_kind(std::string const& name);

struct GraphSpec {
    GraphKind     kind = GraphKind::ring;
    std::int64_t  n    = 0;  ///< vertices (ring, gnm)
    std::int64_t  m    = 0;  ///< undirected edges (gnm)
    std::int64_t  rows = 0;  ///< grid2d
    std::int64_t  cols = 0;  ///< grid2d
    std::uint64_t seed = 0;  ///< gnm

    static GraphSpec ring(std::int64_t n);
    static GraphSpec grid2d(std::int64_t rows, std::int64_t cols);
    static GraphSpec gnm(std::int64_t n, std::int64_t m, std::uint64_t seed);

    std::int64_t vertex_count() const noexcept {
        return kind == GraphKind::grid2d ? rows * cols : n;
    }
};

/// Sorted adjacency lists of the whole graph; every undirected edge appears at both endpoints.
std::vector<std::vector<VertexId>> global_adjacency(GraphSpec const& spec);

/// One rank's share of a graph: a contiguous block of vertices with their adjacency.
struct DistGraph {
    Distribution          vertex_dist;
    int                   rank = 0;
    std::vector<std::int64_t> offsets{0}; ///< local vertex i has neighbors[offsets[i] .. offsets[i+1])
    std::vector<VertexId> neighbors;

    std::int64_t global_size() const noexcept {
        return vertex_dist.n;
    }
    VertexId first() const {
        return vertex_dist.displs[static_cast<std::size_t>(rank)];
    }
    std::int64_t local_size() const {
        return vertex_dist.counts[static_cast<std::size_t>(rank)];
    }
    int owner(VertexId v) const {
        return vertex_dist.owner(v);
    }
    std::span<VertexId const> neighbors_of(std::int64_t local) const {
        auto const b = static_cast<std::size_t>(offsets[static_cast<std::size_t>(local)]);
        auto const e = static_cast<std::size_t>(offsets[static_cast<std::size_t>(local) + 1]);
        return std::span<VertexId const>(neighbors).subspan(b, e - b);
    }
};

/// The block of `rank` out of `p` near-even vertex blocks. The global graph does not depend on p.
DistGraph gen_graph(GraphSpec const& spec, int p, int rank);

/// Single-machine BFS over global adjacency lists.
std::vector<Distance> sequential_bfs(std::vector<std::vector<VertexId>> const& adjacency, VertexId source);

} // namespace xcomm
