#include "xcomm/communicator.hpp"

#include <algorithm>
#include <climits>
#include <cstdlib>
#include <numeric>
#include <tuple>

#include "xcomm/byte_collectives.hpp"

namespace xcomm {

AssertionConfig AssertionConfig::from_env() {
    char const* value = std::getenv("ASSERT_LEVEL");
    if (value == nullptr || *value == '\0') {
        return {};
    }
    return {parse_assertion_level(value)};
}

AssertionLevel parse_assertion_level(std::string_view name) {
    if (name == "none") {
        return AssertionLevel::none;
    }
    if (name == "light") {
        return AssertionLevel::light;
    }
    if (name == "heavy") {
        return AssertionLevel::heavy;
    }
    throw UsageError("unknown assertion level '" + std::string(name) + "' (expected none, light or heavy)");
}

std::string_view to_string(AssertionLevel level) {
    switch (level) {
        case AssertionLevel::none:
            return "none";
        case AssertionLevel::light:
            return "light";
        case AssertionLevel::heavy:
            return "heavy";
    }
    return "?";
}

std::string_view to_string(ParamKind kind) {
    switch (kind) {
        case ParamKind::send_buf:
            return "send_buf";
        case ParamKind::send_recv_buf:
            return "send_recv_buf";
        case ParamKind::recv_buf:
            return "recv_buf";
        case ParamKind::send_counts:
            return "send_counts";
        case ParamKind::recv_counts:
            return "recv_counts";
        case ParamKind::send_displs:
            return "send_displs";
        case ParamKind::recv_displs:
            return "recv_displs";
        case ParamKind::root:
            return "root";
        case ParamKind::op:
            return "op";
        case ParamKind::destination:
            return "destination";
        case ParamKind::source:
            return "source";
        case ParamKind::tag:
            return "tag";
        case ParamKind::recv_count:
            return "recv_count";
    }
    return "?";
}

std::string ValidationReport::message() const {
    std::string msg;
    for (auto const& v: violations) {
        msg += (msg.empty() ? "" : "; ") + v;
    }
    for (auto const& [s, r]: mismatches) {
        msg += (msg.empty() ? "" : "; ") + std::string("count mismatch between sender ") + std::to_string(s)
               + " and receiver " + std::to_string(r);
    }
    return msg;
}

// ---------------------------------------------------------------------------------------------------------------

Communicator::Communicator(std::shared_ptr<Endpoint> endpoint, AssertionConfig config)
    : state_(std::make_shared<RankState>(RankState{std::move(endpoint), 0})),
      config_(config) {
    if (!state_->endpoint) {
        throw UsageError("communicator needs an endpoint");
    }
    rank_ = state_->endpoint->rank();
    size_ = state_->endpoint->size();
}

Communicator::Communicator(
    std::shared_ptr<RankState> state, std::vector<int> members, int rank, std::uint32_t context, AssertionConfig config
)
    : state_(std::move(state)),
      members_(std::move(members)),
      rank_(rank),
      size_(static_cast<int>(members_.size())),
      context_id_(context),
      config_(config) {
    group_to_local_.assign(static_cast<std::size_t>(state_->endpoint->size()), -1);
    for (int local = 0; local < size_; ++local) {
        group_to_local_[static_cast<std::size_t>(members_[static_cast<std::size_t>(local)])] = local;
    }
}

int Communicator::global_rank(int local) const {
    check_rank(local, "rank");
    return members_.empty() ? local : members_[static_cast<std::size_t>(local)];
}

int Communicator::local_rank(int global) const noexcept {
    if (group_to_local_.empty()) {
        return global;
    }
    if (global < 0 || global >= static_cast<int>(group_to_local_.size())) {
        return -1;
    }
    return group_to_local_[static_cast<std::size_t>(global)];
}

void Communicator::check_rank(int r, char const* what) const {
    if (!is_valid_rank(r)) {
        throw UsageError(
            std::string(what) + " " + std::to_string(r) + " out of range for communicator of size "
            + std::to_string(size_)
        );
    }
}

int Communicator::to_global_filter(int src) const {
    if (src == any_source) {
        return any_source;
    }
    return global_rank(src);
}

Tag Communicator::user_tag(int tag) const {
    if (tag < 0 || tag > max_user_tag) {
        throw UsageError("user tag " + std::to_string(tag) + " outside 0.." + std::to_string(max_user_tag));
    }
    return (context_id_ << 17) | static_cast<Tag>(tag);
}

Tag Communicator::internal_tag(InternalTag code, unsigned offset) const {
    return (context_id_ << 17) | (Tag{1} << 16) | (static_cast<Tag>(code) + offset);
}

TagFilter Communicator::any_user_tag() const {
    return TagFilter{context_id_ << 17, 0xFFFF0000u};
}

void Communicator::send_raw(int dst, Tag tag, Bytes payload, MessageClass cls) const {
    check_rank(dst, "destination");
    endpoint().send(global_rank(dst), tag, std::move(payload), cls);
}

SendHandle Communicator::ssend_raw(int dst, Tag tag, Bytes payload, MessageClass cls) const {
    check_rank(dst, "destination");
    return endpoint().ssend_async(global_rank(dst), tag, std::move(payload), cls);
}

Envelope Communicator::recv_raw(int src, TagFilter tag) const {
    auto env = endpoint().recv(to_global_filter(src), tag);
    env.src  = local_rank(env.src);
    env.dst  = rank_;
    return env;
}

std::optional<Envelope> Communicator::try_recv_raw(int src, TagFilter tag) const {
    auto env = endpoint().try_recv(to_global_filter(src), tag);
    if (env) {
        env->src = local_rank(env->src);
        env->dst = rank_;
    }
    return env;
}

std::optional<ProbeInfo> Communicator::probe_raw(int src, TagFilter tag) const {
    auto info = endpoint().probe(to_global_filter(src), tag);
    if (info) {
        info->src = local_rank(info->src);
    }
    return info;
}

Communicator Communicator::split(int color, int key) const {
    // Everyone learns (color, key, highest context id in use) of every member.
    std::array<std::int64_t, 3> mine{color, key, static_cast<std::int64_t>(state_->highest_context)};
    auto const                  mine_bytes = encode(std::span<std::int64_t const>(mine));
    std::vector<std::size_t>    byte_counts(static_cast<std::size_t>(size_), mine_bytes.size());
    auto const all = decode<std::int64_t>(detail::allgatherv_bytes(*this, mine_bytes, byte_counts));

    std::uint32_t highest = state_->highest_context;
    std::vector<std::tuple<std::int64_t, int>> same_color; // (key, parent rank)
    for (int r = 0; r < size_; ++r) {
        auto const base = static_cast<std::size_t>(r) * 3;
        highest         = std::max(highest, static_cast<std::uint32_t>(all[base + 2]));
        if (all[base] == color) {
            same_color.emplace_back(all[base + 1], r);
        }
    }
    auto const context = highest + 1;
    if (context > max_context_id) {
        throw UsageError("communicator context ids exhausted");
    }
    state_->highest_context = context;

    std::sort(same_color.begin(), same_color.end());
    std::vector<int> members;
    int              new_rank = -1;
    for (auto const& [k, parent_rank]: same_color) {
        if (parent_rank == rank_) {
            new_rank = static_cast<int>(members.size());
        }
        members.push_back(global_rank(parent_rank));
    }
    return Communicator(state_, std::move(members), new_rank, context, config_);
}

void Communicator::barrier() const {
    unsigned round = 0;
    for (int distance = 1; distance < size_; distance *= 2, ++round) {
        auto const tag = internal_tag(InternalTag::barrier, round);
        send_raw((rank_ + distance) % size_, tag, {}, MessageClass::protocol);
        recv_raw((rank_ - distance + size_) % size_, TagFilter::exact(tag));
    }
}

namespace {

class IbarrierOperation final : public Operation {
public:
    explicit IbarrierOperation(Communicator comm) : comm_(std::move(comm)) {}

    bool progress() override {
        int const p = comm_.size();
        while (distance_ < p) {
            auto const tag = comm_.internal_tag(InternalTag::ibarrier, round_);
            if (!sent_) {
                comm_.send_raw((comm_.rank() + distance_) % p, tag, {}, MessageClass::protocol);
                sent_ = true;
            }
            if (!comm_.try_recv_raw((comm_.rank() - distance_ + p) % p, TagFilter::exact(tag))) {
                return false;
            }
            sent_ = false;
            distance_ *= 2;
            ++round_;
        }
        return true;
    }

    Endpoint& endpoint() override {
        return comm_.endpoint();
    }

private:
    Communicator comm_;
    int          distance_ = 1;
    unsigned     round_    = 0;
    bool         sent_     = false;
};

} // namespace

Request Communicator::ibarrier() const {
    return Request(std::make_unique<IbarrierOperation>(*this));
}

// ---------------------------------------------------------------------------------------------------------------

std::vector<int> exclusive_prefix_sum(std::span<int const> counts, std::string_view what) {
    std::vector<int> displs(counts.size());
    std::int64_t     running = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (running > INT_MAX) {
            throw CountsError(std::string(what) + ": displacement overflows the int range");
        }
        displs[i] = static_cast<int>(running);
        running += counts[i];
    }
    return displs;
}

namespace {

std::vector<std::string> local_count_violations(int size, std::span<int const> send_counts) {
    std::vector<std::string> violations;
    if (static_cast<int>(send_counts.size()) != size) {
        violations.push_back(
            "send_counts has " + std::to_string(send_counts.size()) + " entries, expected " + std::to_string(size)
        );
    }
    for (std::size_t i = 0; i < send_counts.size(); ++i) {
        if (send_counts[i] < 0) {
            violations.push_back("send_counts[" + std::to_string(i) + "] is negative (" + std::to_string(send_counts[i]) + ")");
        }
    }
    return violations;
}

} // namespace

ValidationReport validate_counts(
    Communicator const& comm, std::span<int const> send_counts, AssertionConfig config,
    std::optional<std::span<int const>> expected_recv_counts
) {
    ValidationReport report;
    if (!config.light()) {
        return report;
    }
    auto local = local_count_violations(comm.size(), send_counts);
    if (expected_recv_counts && static_cast<int>(expected_recv_counts->size()) != comm.size()) {
        local.push_back(
            "recv_counts has " + std::to_string(expected_recv_counts->size()) + " entries, expected "
            + std::to_string(comm.size())
        );
    }
    if (!config.heavy()) {
        report.violations = std::move(local);
        return report;
    }

    // Heavy: share every rank's local violations so all ranks agree on the outcome.
    std::string text;
    for (auto const& v: local) {
        text += "rank " + std::to_string(comm.rank()) + ": " + v + "\n";
    }
    auto const*              first = reinterpret_cast<std::byte const*>(text.data());
    Bytes                    text_bytes(first, first + text.size());
    auto const               text_sizes = detail::allgatherv_bytes(
        comm, encode(std::vector<std::uint64_t>{text_bytes.size()}),
        std::vector<std::size_t>(static_cast<std::size_t>(comm.size()), sizeof(std::uint64_t))
    );
    auto const               sizes = decode<std::uint64_t>(text_sizes);
    std::vector<std::size_t> byte_counts(sizes.begin(), sizes.end());
    auto const               all_text = detail::allgatherv_bytes(comm, text_bytes, byte_counts);
    if (!all_text.empty()) {
        std::string joined(reinterpret_cast<char const*>(all_text.data()), all_text.size());
        std::size_t start = 0;
        while (start < joined.size()) {
            auto const end = joined.find('\n', start);
            report.violations.push_back(joined.substr(start, end - start));
            start = end + 1;
        }
        return report;
    }

    // Transposition: receiver r learns what every sender s intends to send it.
    auto const        p = static_cast<std::size_t>(comm.size());
    detail::Segments  segments;
    segments.lengths.assign(p, sizeof(std::int32_t));
    segments.offsets.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        segments.offsets[i] = i * sizeof(std::int32_t);
    }
    auto const sent = encode(send_counts);
    Bytes      received(p * sizeof(std::int32_t));
    detail::alltoallv_bytes(comm, sent, segments, received, segments);
    auto const incoming = decode<std::int32_t>(received);

    std::vector<std::int32_t> local_mismatches;
    if (expected_recv_counts) {
        for (std::size_t s = 0; s < p; ++s) {
            if (incoming[s] != (*expected_recv_counts)[s]) {
                local_mismatches.push_back(static_cast<std::int32_t>(s));
                local_mismatches.push_back(comm.rank());
            }
        }
    }
    auto const mismatch_bytes = encode(local_mismatches);
    auto const counts_bytes   = detail::allgatherv_bytes(
        comm, encode(std::vector<std::uint64_t>{mismatch_bytes.size()}),
        std::vector<std::size_t>(p, sizeof(std::uint64_t))
    );
    auto const               mismatch_sizes = decode<std::uint64_t>(counts_bytes);
    std::vector<std::size_t> mismatch_counts(mismatch_sizes.begin(), mismatch_sizes.end());
    auto const all_mismatches = decode<std::int32_t>(detail::allgatherv_bytes(comm, mismatch_bytes, mismatch_counts));
    for (std::size_t i = 0; i + 1 < all_mismatches.size(); i += 2) {
        report.mismatches.emplace_back(all_mismatches[i], all_mismatches[i + 1]);
    }
    return report;
}

} // namespace xcomm
