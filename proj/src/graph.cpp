#include "xcomm/algorithms/graph.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <set>

namespace xcomm {

std::string to_string(GraphKind kind) {
    switch (kind) {
        case GraphKind::ring:
            return "ring";
        case GraphKind::grid2d:
            return "grid2d";
        case GraphKind::gnm:
            return "gnm";
    }
    return "?";
}

GraphKind parse_graph_kind(std::string const& name) {
    if (name == "ring") {
        return GraphKind::ring;
    }
    if (name == "grid2d") {
        return GraphKind::grid2d;
    }
    if (name == "gnm") {
        return GraphKind::gnm;
    }
    throw UsageError("unknown graph kind '" + name + "' (expected ring, grid2d or gnm)");
}

GraphSpec GraphSpec::ring(std::int64_t n) {
    GraphSpec s;
    s.kind = GraphKind::ring;
    s.n    = n;
    return s;
}

GraphSpec GraphSpec::grid2d(std::int64_t rows, std::int64_t cols) {
    GraphSpec s;
    s.kind = GraphKind::grid2d;
    s.rows = rows;
    s.cols = cols;
    return s;
}

GraphSpec GraphSpec::gnm(std::int64_t n, std::int64_t m, std::uint64_t seed) {
    GraphSpec s;
    s.kind = GraphKind::gnm;
    s.n    = n;
    s.m    = m;
    s.seed = seed;
    return s;
}

std::vector<std::vector<VertexId>> global_adjacency(GraphSpec const& spec) {
    std::vector<std::pair<VertexId, VertexId>> edges;
    switch (spec.kind) {
        case GraphKind::ring: {
            if (spec.n < 1) {
                throw UsageError("ring: n must be at least 1");
            }
            if (spec.n == 2) {
                edges.emplace_back(0, 1);
            } else if (spec.n > 2) {
                for (VertexId v = 0; v < spec.n; ++v) {
                    edges.emplace_back(v, (v + 1) % spec.n);
                }
            }
            break;
        }
        case GraphKind::grid2d: {
            if (spec.rows < 1 || spec.cols < 1) {
                throw UsageError("grid2d: dimensions must be positive");
            }
            for (std::int64_t r = 0; r < spec.rows; ++r) {
                for (std::int64_t c = 0; c < spec.cols; ++c) {
                    VertexId const v = r * spec.cols + c;
                    if (c + 1 < spec.cols) {
                        edges.emplace_back(v, v + 1);
                    }
                    if (r + 1 < spec.rows) {
                        edges.emplace_back(v, v + spec.cols);
                    }
                }
            }
            break;
        }
        case GraphKind::gnm: {
            if (spec.n < 1) {
                throw UsageError("gnm: n must be at least 1");
            }
            auto const max_edges = spec.n * (spec.n - 1) / 2;
            if (spec.m < 0 || spec.m > max_edges) {
                throw UsageError(
                    "gnm: m must lie in [0, " + std::to_string(max_edges) + "] for n = " + std::to_string(spec.n)
                );
            }
            std::mt19937_64                              gen(spec.seed);
            std::uniform_int_distribution<VertexId>      pick(0, spec.n - 1);
            std::set<std::pair<VertexId, VertexId>>      chosen;
            while (static_cast<std::int64_t>(chosen.size()) < spec.m) {
                auto u = pick(gen);
                auto v = pick(gen);
                if (u == v) {
                    continue;
                }
                chosen.emplace(std::min(u, v), std::max(u, v));
            }
            edges.assign(chosen.begin(), chosen.end());
            break;
        }
    }
    std::vector<std::vector<VertexId>> adjacency(static_cast<std::size_t>(spec.vertex_count()));
    for (auto const& [u, v]: edges) {
        adjacency[static_cast<std::size_t>(u)].push_back(v);
        adjacency[static_cast<std::size_t>(v)].push_back(u);
    }
    for (auto& list: adjacency) {
        std::sort(list.begin(), list.end());
    }
    return adjacency;
}

DistGraph gen_graph(GraphSpec const& spec, int p, int rank) {
    if (p < 1 || rank < 0 || rank >= p) {
        throw UsageError("gen_graph: invalid rank " + std::to_string(rank) + " of " + std::to_string(p));
    }
    auto const adjacency = global_adjacency(spec);
    DistGraph  g;
    g.vertex_dist = Distribution::even(spec.vertex_count(), p);
    g.rank        = rank;
    for (std::int64_t i = 0; i < g.local_size(); ++i) {
        auto const& list = adjacency[static_cast<std::size_t>(g.first() + i)];
        g.neighbors.insert(g.neighbors.end(), list.begin(), list.end());
        g.offsets.push_back(static_cast<std::int64_t>(g.neighbors.size()));
    }
    return g;
}

std::vector<Distance> sequential_bfs(std::vector<std::vector<VertexId>> const& adjacency, VertexId source) {
    if (source < 0 || source >= static_cast<VertexId>(adjacency.size())) {
        throw UsageError("bfs: source vertex out of range");
    }
    std::vector<Distance> dist(adjacency.size(), unreached);
    std::deque<VertexId>  queue{source};
    dist[static_cast<std::size_t>(source)] = 0;
    while (!queue.empty()) {
        auto const u = queue.front();
        queue.pop_front();
        for (auto v: adjacency[static_cast<std::size_t>(u)]) {
            if (dist[static_cast<std::size_t>(v)] == unreached) {
                dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                queue.push_back(v);
            }
        }
    }
    return dist;
}

} // namespace xcomm
