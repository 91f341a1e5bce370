#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "xcomm/collectives.hpp"

namespace xcomm {

struct SampleSortConfig {
    int           oversampling = 16; ///< samples drawn per rank
    std::uint64_t seed         = 0;
};

/// Sample sort. On return every rank's block is sorted and the blocks, read in rank order, form the sorted
/// global sequence. Elements equal to a splitter go to that splitter's bucket (first splitter >= element).
template <FixedWidth T, typename Compare = std::less<>>
std::vector<T> sample_sort(
    Communicator const& comm, std::vector<T> data, Compare comp = {}, SampleSortConfig config = {}
) {
    if (config.oversampling < 1) {
        throw UsageError("sample_sort: oversampling must be at least 1");
    }
    int const p = comm.size();
    if (p == 1) {
        std::sort(data.begin(), data.end(), comp);
        return data;
    }

    std::vector<T> local_samples;
    if (!data.empty()) {
        std::seed_seq                              seq{config.seed, static_cast<std::uint64_t>(comm.rank())};
        std::mt19937_64                            gen(seq);
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        for (int i = 0; i < config.oversampling; ++i) {
            local_samples.push_back(data[pick(gen)]);
        }
    }
    std::vector<T> samples = comm.allgatherv(send_buf(local_samples));
    std::sort(samples.begin(), samples.end(), comp);

    std::vector<T> splitters;
    if (!samples.empty()) {
        for (int i = 0; i + 1 < p; ++i) {
            splitters.push_back(samples[static_cast<std::size_t>(i + 1) * samples.size() / static_cast<std::size_t>(p)]);
        }
    }

    std::sort(data.begin(), data.end(), comp);
    std::vector<int> counts(static_cast<std::size_t>(p), 0);
    if (splitters.empty()) {
        counts[0] = static_cast<int>(data.size());
    } else {
        auto begin = data.begin();
        for (std::size_t b = 0; b < splitters.size(); ++b) {
            // Sorted data: the bucket boundary is the first element greater than splitter b.
            auto end      = std::upper_bound(begin, data.end(), splitters[b], comp);
            counts[b]     = static_cast<int>(end - begin);
            begin         = end;
        }
        counts.back() = static_cast<int>(data.end() - begin);
    }

    std::vector<T> result = comm.alltoallv(send_buf(std::move(data)), send_counts(std::move(counts)));
    std::sort(result.begin(), result.end(), comp);
    return result;
}

} // namespace xcomm
