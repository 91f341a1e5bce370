#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace xcomm::bench {

/// One CSV row.
struct BenchRecord {
    std::string   benchmark;
    int           p = 1;
    std::string   transport;
    std::string   strategy;
    std::int64_t  input_size = 0;
    std::uint64_t seed       = 0;
    double        wall_time_seconds     = 0.0;
    std::uint64_t messages_per_rank_max = 0;
    std::uint64_t bytes_total           = 0;
    std::uint64_t checksum              = 0;
};

std::string csv_header();
std::string to_csv(BenchRecord const& record);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<std::byte const> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);

/// Parses `argv` and runs the benchmark. CSV goes to `out`, diagnostics to `err`. Returns the process exit
/// code: 0 success, 1 verification failure or runtime error, 2 invalid flags.
int run_cli(int argc, char const* const* argv, std::ostream& out, std::ostream& err);

} // namespace xcomm::bench
