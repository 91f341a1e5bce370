#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xcomm/datatypes.hpp"
#include "xcomm/params.hpp"
#include "xcomm/request.hpp"
#include "xcomm/transport.hpp"

namespace xcomm {

/// Wildcard for tag filters of user receives.
inline constexpr int any_tag = -1;

/// Tag codes of library-internal traffic. Each collective has its own code so that traffic of different
/// operations never matches; consecutive calls of the same operation are separated by per-channel FIFO order.
enum class InternalTag : std::uint16_t {
    barrier          = 0x0000, // + round
    ibarrier         = 0x0040, // + round
    bcast            = 0x0100,
    gather           = 0x0101,
    alltoall         = 0x0102,
    reduce           = 0x0103,
    reduce_result    = 0x0104,
    split            = 0x0105,
    validate         = 0x0106,
    p2p_serialized   = 0x0107,
    sparse_exchange  = 0x0200, // + epoch parity
    grid_hop_row     = 0x0210,
    grid_hop_column  = 0x0211,
    reproducible     = 0x0220,
};

/// Outcome of validate_counts.
struct ValidationReport {
    std::vector<std::string>         violations;
    std::vector<std::pair<int, int>> mismatches; ///< (sender, receiver) pairs whose counts disagree

    bool ok() const noexcept {
        return violations.empty() && mismatches.empty();
    }
    std::string message() const;
};

/// A rank's handle to a group: identity, sub-groups, barriers, point-to-point and collectives.
///
/// One communicator belongs to one worker. Traffic of a communicator is isolated from its parent and
/// siblings by a context id carried in the upper tag bits: bits 17..31 hold the context, bit 16 separates
/// library-internal traffic from user tags, bits 0..15 hold the user tag.
class Communicator {
public:
    static constexpr int           max_user_tag   = 0xFFFF;
    static constexpr std::uint32_t max_context_id = 0x7FFF;

    explicit Communicator(std::shared_ptr<Endpoint> endpoint, AssertionConfig config = AssertionConfig::from_env());

    int rank() const noexcept {
        return rank_;
    }
    int size() const noexcept {
        return size_;
    }
    std::pair<int, int> rank_and_size() const noexcept {
        return {rank_, size_};
    }
    std::uint32_t context_id() const noexcept {
        return context_id_;
    }
    AssertionConfig const& assertion_config() const noexcept {
        return config_;
    }
    void set_assertion_level(AssertionLevel level) noexcept {
        config_.level = level;
    }
    Endpoint& endpoint() const noexcept {
        return *state_->endpoint;
    }
    /// Rank of a member of this communicator in the underlying group.
    int global_rank(int local) const;
    /// Rank in this communicator of a group rank, or -1 if it is not a member.
    int local_rank(int global) const noexcept;

    bool is_valid_rank(int r) const noexcept {
        return r >= 0 && r < size_;
    }
    void check_rank(int r, char const* what) const;

    /// Collective. Members sharing `color` form a new communicator, ordered by (key, parent rank).
    Communicator split(int color, int key) const;

    /// Dissemination barrier.
    void barrier() const;

    /// Non-blocking barrier; completes only after every member has called ibarrier.
    Request ibarrier() const;

    // --- raw traffic, used by collectives and plugins ---------------------------------------------------------

    Tag       user_tag(int tag) const;
    Tag       internal_tag(InternalTag code, unsigned offset = 0) const;
    TagFilter any_user_tag() const;

    void       send_raw(int dst, Tag tag, Bytes payload, MessageClass cls = MessageClass::payload) const;
    SendHandle ssend_raw(int dst, Tag tag, Bytes payload, MessageClass cls = MessageClass::payload) const;
    /// Blocking receive; the envelope's src is translated to a rank of this communicator.
    Envelope                 recv_raw(int src, TagFilter tag) const;
    std::optional<Envelope>  try_recv_raw(int src, TagFilter tag) const;
    std::optional<ProbeInfo> probe_raw(int src, TagFilter tag) const;

    /// Next epoch of the sparse exchange protocol on this communicator.
    std::uint32_t next_sparse_epoch() const noexcept {
        return (*sparse_epoch_)++;
    }

    // --- typed point-to-point ---------------------------------------------------------------------------------

    template <FixedWidth T>
    void send_typed(int dst, int tag, std::span<T const> values) const;
    template <FixedWidth T>
    std::vector<T> recv_typed(int src, int tag) const;
    /// Like recv_typed but also reports the sender (useful with any_source).
    template <FixedWidth T>
    std::pair<int, std::vector<T>> recv_typed_from(int src, int tag) const;

    // --- named-parameter point-to-point (defined in p2p.hpp / nonblocking.hpp) -------------------------------

    template <typename... Params>
    void send(Params&&... params) const;
    template <typename T = void, typename... Params>
    auto recv(Params&&... params) const;
    template <typename... Params>
    auto isend(Params&&... params) const;
    template <typename T, typename... Params>
    auto irecv(Params&&... params) const;

    // --- collectives (defined in collectives.hpp) -------------------------------------------------------------

    template <typename... Params>
    auto bcast(Params&&... params) const;
    template <typename... Params>
    auto allgather(Params&&... params) const;
    template <typename... Params>
    auto allgatherv(Params&&... params) const;
    template <typename... Params>
    auto gatherv(Params&&... params) const;
    template <typename... Params>
    auto alltoall(Params&&... params) const;
    template <typename... Params>
    auto alltoallv(Params&&... params) const;
    template <typename... Params>
    auto reduce(Params&&... params) const;
    template <typename... Params>
    auto allreduce(Params&&... params) const;

private:
    struct RankState {
        std::shared_ptr<Endpoint> endpoint;
        std::uint32_t             highest_context = 0;
    };

    Communicator(
        std::shared_ptr<RankState> state, std::vector<int> members, int rank, std::uint32_t context,
        AssertionConfig config
    );

    int to_global_filter(int src) const;

    std::shared_ptr<RankState> state_;
    std::vector<int>           members_;         ///< local -> group rank; empty for the whole group
    std::vector<int>           group_to_local_;  ///< group rank -> local rank or -1; empty for the whole group
    int                        rank_       = 0;
    int                        size_       = 0;
    std::uint32_t              context_id_ = 0;
    AssertionConfig            config_;
    // Shared by copies so that every handle of this communicator advances the same epoch.
    std::shared_ptr<std::uint32_t> sparse_epoch_ = std::make_shared<std::uint32_t>(0);
};

/// Checks a send-counts vector. Light: length equals the communicator size and no entry is negative.
/// Heavy (collective): additionally exchanges the counts so each receiver can compare what every sender
/// intends to send it with `expected_recv_counts` (when supplied); every rank gets the full report.
ValidationReport validate_counts(
    Communicator const& comm, std::span<int const> send_counts, AssertionConfig config,
    std::optional<std::span<int const>> expected_recv_counts = std::nullopt
);

/// Exclusive prefix sum; throws CountsError when a displacement exceeds the int range.
std::vector<int> exclusive_prefix_sum(std::span<int const> counts, std::string_view what);

// ---------------------------------------------------------------------------------------------------------------

template <FixedWidth T>
void Communicator::send_typed(int dst, int tag, std::span<T const> values) const {
    send_raw(dst, user_tag(tag), encode(values));
}

template <FixedWidth T>
std::vector<T> Communicator::recv_typed(int src, int tag) const {
    return recv_typed_from<T>(src, tag).second;
}

template <FixedWidth T>
std::pair<int, std::vector<T>> Communicator::recv_typed_from(int src, int tag) const {
    TagFilter filter = tag < 0 ? any_user_tag() : TagFilter::exact(user_tag(tag));
    auto      env    = recv_raw(src, filter);
    return {env.src, decode<T>(env.payload)};
}

} // namespace xcomm
