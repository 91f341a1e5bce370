#include "xcomm/bench_cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "xcomm/algorithms/bfs.hpp"
#include "xcomm/algorithms/sample_sort.hpp"
#include "xcomm/xcomm.hpp"

namespace xcomm::bench {

std::string csv_header() {
    return "benchmark,p,transport,strategy,input_size,seed,wall_time_seconds,messages_per_rank_max,bytes_total,"
           "checksum";
}

std::string to_csv(BenchRecord const& r) {
    std::ostringstream os;
    os << r.benchmark << ',' << r.p << ',' << r.transport << ',' << r.strategy << ',' << r.input_size << ','
       << r.seed << ',' << std::fixed << std::setprecision(6) << r.wall_time_seconds << ','
       << r.messages_per_rank_max << ',' << r.bytes_total << ',' << std::hex << std::setw(16) << std::setfill('0')
       << r.checksum;
    return os.str();
}

std::uint64_t fnv1a(std::span<std::byte const> bytes, std::uint64_t hash) {
    for (auto b: bytes) {
        hash ^= static_cast<std::uint64_t>(b);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace {

struct Options {
    std::string   command;
    int           ranks     = 4;
    std::string   transport = "inproc";
    int           port_base = 0;
    std::int64_t  n         = 1000;
    std::int64_t  m         = 0;
    std::string   graph     = "gnm";
    std::string   strategy  = "direct";
    std::uint64_t seed      = 1;
    int           reps      = 1;
    bool          verify    = false;
    std::string   assert_level;
};

/// What each rank reports for one repetition.
struct RankReport {
    double        seconds   = 0.0;
    std::uint64_t envelopes = 0;
    std::uint64_t bytes     = 0;
};

/// Result computed on rank 0.
struct RootReport {
    std::uint64_t checksum = 0;
    bool          verified = true;
    std::string   failure;
};

/// Runs `body(comm)` between a barrier and the end of the timed region, then records the rank's counters.
template <typename Body>
RankReport timed_region(Communicator const& comm, Body&& body) {
    comm.barrier();
    comm.endpoint().reset_stats();
    auto const start = std::chrono::steady_clock::now();
    body();
    auto const stop  = std::chrono::steady_clock::now();
    auto const stats = comm.endpoint().stats();
    return {std::chrono::duration<double>(stop - start).count(), stats.envelopes(), stats.bytes_sent};
}

std::vector<std::uint64_t> global_random_values(std::int64_t n, std::uint64_t seed) {
    std::mt19937_64            gen(seed);
    std::vector<std::uint64_t> values(static_cast<std::size_t>(n));
    for (auto& v: values) {
        v = gen();
    }
    return values;
}

template <typename T>
std::vector<T> local_block(std::vector<T> const& global, Distribution const& dist, int rank) {
    auto const first = global.begin() + dist.displs[static_cast<std::size_t>(rank)];
    return {first, first + dist.counts[static_cast<std::size_t>(rank)]};
}

template <typename T>
std::uint64_t checksum_of(std::vector<T> const& values) {
    return fnv1a(encode(values));
}

GraphSpec graph_spec(Options const& o) {
    switch (parse_graph_kind(o.graph)) {
        case GraphKind::ring:
            return GraphSpec::ring(o.n);
        case GraphKind::grid2d: {
            // Most square factorization rows x cols = n.
            auto rows = static_cast<std::int64_t>(std::sqrt(static_cast<double>(o.n)));
            while (rows > 1 && o.n % rows != 0) {
                --rows;
            }
            rows = std::max<std::int64_t>(rows, 1);
            return GraphSpec::grid2d(rows, o.n / rows);
        }
        case GraphKind::gnm:
            return GraphSpec::gnm(o.n, o.m, o.seed);
    }
    return {};
}

RootReport run_allgather_demo(Communicator const& comm, Options const& o, RankReport& report) {
    auto const dist   = Distribution::even(o.n, comm.size());
    auto const global = global_random_values(o.n, o.seed);
    auto const mine   = local_block(global, dist, comm.rank());
    std::vector<std::uint64_t> result;
    report = timed_region(comm, [&] { result = comm.allgatherv(send_buf(mine)); });
    RootReport root;
    if (comm.rank() == 0) {
        root.checksum = checksum_of(result);
        if (o.verify && result != global) {
            root.verified = false;
            root.failure  = "allgatherv result differs from the concatenated inputs";
        }
    }
    return root;
}

RootReport run_sort(Communicator const& comm, Options const& o, RankReport& report) {
    auto const dist   = Distribution::even(o.n, comm.size());
    auto const global = global_random_values(o.n, o.seed);
    auto       mine   = local_block(global, dist, comm.rank());
    std::vector<std::uint64_t> sorted;
    report = timed_region(comm, [&] {
        sorted = sample_sort(comm, std::move(mine), std::less<>{}, SampleSortConfig{16, o.seed});
    });
    std::vector<std::uint64_t> all = comm.gatherv(send_buf(sorted));
    RootReport                 root;
    if (comm.rank() == 0) {
        root.checksum = checksum_of(all);
        if (o.verify) {
            auto expected = global;
            std::sort(expected.begin(), expected.end());
            if (all != expected) {
                root.verified = false;
                root.failure  = "sample sort output differs from the sequential sort";
            }
        }
    }
    return root;
}

RootReport run_bfs(Communicator const& comm, Options const& o, RankReport& report) {
    auto const spec     = graph_spec(o);
    auto const graph    = gen_graph(spec, comm.size(), comm.rank());
    auto const strategy = parse_exchange_strategy(o.strategy);
    std::vector<Distance> dist;
    report = timed_region(comm, [&] { dist = bfs(comm, graph, 0, strategy); });
    std::vector<Distance> all = comm.gatherv(send_buf(dist));
    RootReport            root;
    if (comm.rank() == 0) {
        root.checksum = checksum_of(all);
        if (o.verify && all != sequential_bfs(global_adjacency(spec), 0)) {
            root.verified = false;
            root.failure  = "bfs distances differ from the sequential bfs";
        }
    }
    return root;
}

int execute(Options const& o, std::ostream& out, std::ostream& err) {
    auto const      kind  = parse_transport_kind(o.transport);
    AssertionConfig level = AssertionConfig::from_env();
    if (!o.assert_level.empty()) {
        level.level = parse_assertion_level(o.assert_level);
    }
    TransportConfig config;
    config.port_base = o.port_base;
    auto group       = spawn_group(o.ranks, kind, config);

    std::int64_t const input_size = o.n;
    std::string const  strategy   = o.command == "bfs" ? o.strategy : "-";
    std::vector<BenchRecord> rows;
    for (int rep = 0; rep < o.reps; ++rep) {
        std::vector<RankReport> reports(static_cast<std::size_t>(o.ranks));
        RootReport              root;
        std::mutex              mutex;
        group.run([&](std::shared_ptr<Endpoint> const& ep) {
            Communicator comm(ep, level);
            RankReport   mine;
            RootReport   result;
            if (o.command == "allgather-demo") {
                result = run_allgather_demo(comm, o, mine);
            } else if (o.command == "sort") {
                result = run_sort(comm, o, mine);
            } else {
                result = run_bfs(comm, o, mine);
            }
            std::lock_guard lock(mutex);
            reports[static_cast<std::size_t>(comm.rank())] = mine;
            if (comm.rank() == 0) {
                root = result;
            }
        });
        if (!root.verified) {
            err << "verification failed: " << root.failure << '\n';
            return 1;
        }
        BenchRecord r;
        r.benchmark  = o.command;
        r.p          = o.ranks;
        r.transport  = o.transport;
        r.strategy   = strategy;
        r.input_size = input_size;
        r.seed       = o.seed;
        for (auto const& rr: reports) {
            r.wall_time_seconds     = std::max(r.wall_time_seconds, rr.seconds);
            r.messages_per_rank_max = std::max(r.messages_per_rank_max, rr.envelopes);
            r.bytes_total += rr.bytes;
        }
        r.checksum = root.checksum;
        rows.push_back(r);
    }
    out << csv_header() << '\n';
    for (auto const& r: rows) {
        out << to_csv(r) << '\n';
    }
    return 0;
}

} // namespace

int run_cli(int argc, char const* const* argv, std::ostream& out, std::ostream& err) {
    Options  o;
    CLI::App app{"Collective communication benchmarks over an in-process or TCP rank group"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--ranks", o.ranks, "Number of ranks")->check(CLI::Range(1, 4096));
        sub->add_option("--transport", o.transport, "inproc or tcp")->check(CLI::IsMember({"inproc", "tcp"}));
        sub->add_option("--port-base", o.port_base, "First TCP port (0: OS-assigned)")->check(CLI::Range(0, 65535));
        sub->add_option("--n", o.n, "Input size (elements or vertices)")->check(CLI::NonNegativeNumber);
        sub->add_option("--m", o.m, "Edges (gnm)")->check(CLI::NonNegativeNumber);
        sub->add_option("--graph", o.graph, "ring, grid2d or gnm")->check(CLI::IsMember({"ring", "grid2d", "gnm"}));
        sub->add_option("--strategy", o.strategy, "direct, sparse or grid")
            ->check(CLI::IsMember({"direct", "sparse", "grid"}));
        sub->add_option("--seed", o.seed, "Random seed");
        sub->add_option("--reps", o.reps, "Repetitions")->check(CLI::Range(1, 1000000));
        sub->add_flag("--verify", o.verify, "Check results against sequential oracles");
        sub->add_option("--assert", o.assert_level, "none, light or heavy (default: ASSERT_LEVEL or light)")
            ->check(CLI::IsMember({"none", "light", "heavy"}));
    };
    for (auto const* name: {"allgather-demo", "sort", "bfs"}) {
        auto* sub = app.add_subcommand(name, std::string("Run the ") + name + " benchmark");
        add_common(sub);
        sub->callback([&o, name] { o.command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (CLI::CallForHelp const& e) {
        out << app.help();
        return 0;
    } catch (CLI::ParseError const& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return 2;
    }
    if (o.command == "bfs" && o.n < 1) {
        err << "error: bfs needs --n >= 1\n";
        return 2;
    }
    try {
        return execute(o, out, err);
    } catch (UsageError const& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (std::exception const& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace xcomm::bench
