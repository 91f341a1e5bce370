#include "xcomm/plugins/grid_alltoall.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

namespace xcomm {

GridTopology::GridTopology(int size) : p(size) {
    if (size < 1) {
        throw UsageError("grid: group size must be at least 1");
    }
    columns = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(size))));
    while (columns * columns < size) {
        ++columns;
    }
    while (columns > 1 && (columns - 1) * (columns - 1) >= size) {
        --columns;
    }
    rows = (size + columns - 1) / columns;
}

int GridTopology::rank_at(int row, int column) const noexcept {
    if (row < 0 || row >= rows || column < 0 || column >= columns) {
        return -1;
    }
    int const rank = row * columns + column;
    return rank < p ? rank : -1;
}

int GridTopology::row_width(int row) const noexcept {
    if (row < 0 || row >= rows) {
        return 0;
    }
    return std::min(columns, p - row * columns);
}

std::vector<int> GridTopology::row_members(int row) const {
    std::vector<int> out;
    for (int c = 0; c < row_width(row); ++c) {
        out.push_back(row * columns + c);
    }
    return out;
}

std::vector<int> GridTopology::column_members(int column) const {
    std::vector<int> out;
    for (int r = 0; r < rows; ++r) {
        if (int const k = rank_at(r, column); k >= 0) {
            out.push_back(k);
        }
    }
    return out;
}

int GridTopology::intermediate_of(int s, int d) const noexcept {
    if (rows == 1) {
        return d;
    }
    if (int const k = rank_at(row_of(s), column_of(d)); k >= 0) {
        return k;
    }
    return rank_at(row_of(s) - 1, column_of(d));
}

std::vector<int> GridTopology::hop1_targets(int rank) const {
    std::vector<int> out;
    for (int c = 0; c < columns; ++c) {
        int const k = rank_at(row_of(rank), c);
        out.push_back(k >= 0 ? k : rank_at(row_of(rank) - 1, c));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> GridTopology::hop1_sources(int rank) const {
    std::vector<int> out = row_members(row_of(rank));
    // Ranks of the last row route through this row when their own row lacks this column.
    if (row_of(rank) == rows - 2) {
        for (int k: row_members(rows - 1)) {
            if (rank_at(rows - 1, column_of(rank)) < 0) {
                out.push_back(k);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

Grid build_grid(Communicator const& comm) {
    GridTopology topology(comm.size());
    auto         row    = comm.split(topology.row_of(comm.rank()), comm.rank());
    auto         column = comm.split(topology.column_of(comm.rank()), comm.rank());
    return {topology, std::move(row), std::move(column)};
}

namespace detail {

namespace {

struct Record {
    std::uint32_t final_dst;
    std::uint32_t origin;
    Bytes         data;
};

// Envelope layout: [u32 record count] then per record [u32 final_dst][u32 origin][u32 byte length][bytes].
Bytes pack(std::vector<Record> const& records) {
    std::size_t total = sizeof(std::uint32_t);
    for (auto const& r: records) {
        total += 3 * sizeof(std::uint32_t) + r.data.size();
    }
    Bytes out(total);
    auto* cursor = out.data();
    auto  put    = [&](std::uint32_t v) {
        detail::store_le(v, cursor);
        cursor += sizeof v;
    };
    put(static_cast<std::uint32_t>(records.size()));
    for (auto const& r: records) {
        put(r.final_dst);
        put(r.origin);
        put(static_cast<std::uint32_t>(r.data.size()));
        cursor = std::copy(r.data.begin(), r.data.end(), cursor);
    }
    return out;
}

void unpack(Bytes const& bytes, std::vector<Record>& out) {
    std::size_t pos  = 0;
    auto        take = [&]() {
        if (pos + sizeof(std::uint32_t) > bytes.size()) {
            throw DecodeError("grid: truncated routing envelope");
        }
        auto v = detail::load_le<std::uint32_t>(bytes.data() + pos);
        pos += sizeof v;
        return v;
    };
    auto const count = take();
    for (std::uint32_t i = 0; i < count; ++i) {
        Record r;
        r.final_dst     = take();
        r.origin        = take();
        auto const size = take();
        if (pos + size > bytes.size()) {
            throw DecodeError("grid: truncated routing record");
        }
        r.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
        out.push_back(std::move(r));
    }
}

// Sends one envelope to every partner (empty ones as protocol traffic), keeps the own share, then collects
// one envelope from every source.
std::vector<Record> exchange(
    Communicator const& comm, InternalTag code, std::map<int, std::vector<Record>> outgoing,
    std::vector<int> const& partners, std::vector<int> const& sources
) {
    auto const          tag  = comm.internal_tag(code);
    int const           self = comm.rank();
    std::vector<Record> incoming;
    for (int partner: partners) {
        auto& records = outgoing[partner];
        if (partner == self) {
            continue;
        }
        comm.send_raw(partner, tag, pack(records), records.empty() ? MessageClass::protocol : MessageClass::payload);
    }
    for (auto& r: outgoing[self]) {
        incoming.push_back(std::move(r));
    }
    for (int src: sources) {
        if (src != self) {
            unpack(comm.recv_raw(src, TagFilter::exact(tag)).payload, incoming);
        }
    }
    return incoming;
}

} // namespace

std::vector<Bytes> grid_exchange_bytes(
    Communicator const& comm, GridTopology const& topology, std::vector<std::span<std::byte const>> const& segments
) {
    int const p    = comm.size();
    int const self = comm.rank();

    std::map<int, std::vector<Record>> hop1;
    for (int d = 0; d < p; ++d) {
        auto const& seg = segments[static_cast<std::size_t>(d)];
        if (seg.empty()) {
            continue;
        }
        hop1[topology.intermediate_of(self, d)].push_back(
            {static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(self), Bytes(seg.begin(), seg.end())}
        );
    }
    auto at_intermediate = exchange(
        comm, InternalTag::grid_hop_row, std::move(hop1), topology.hop1_targets(self), topology.hop1_sources(self)
    );

    std::map<int, std::vector<Record>> hop2;
    for (auto& r: at_intermediate) {
        hop2[static_cast<int>(r.final_dst)].push_back(std::move(r));
    }
    auto const column    = topology.column_members(topology.column_of(self));
    auto       delivered = exchange(comm, InternalTag::grid_hop_column, std::move(hop2), column, column);

    std::vector<Bytes> per_origin(static_cast<std::size_t>(p));
    for (auto& r: delivered) {
        if (r.final_dst != static_cast<std::uint32_t>(self) || r.origin >= static_cast<std::uint32_t>(p)) {
            throw DecodeError("grid: misrouted record");
        }
        auto& slot = per_origin[r.origin];
        slot.insert(slot.end(), r.data.begin(), r.data.end());
    }
    return per_origin;
}

} // namespace detail

} // namespace xcomm
