#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "xcomm/byte_collectives.hpp"
#include "xcomm/communicator.hpp"
#include "xcomm/datatypes.hpp"
#include "xcomm/params.hpp"

// Typed collectives. Baseline algorithms and their envelope counts (payload class, whole group):
//   bcast       binomial tree                         p-1 (0 when the size is known and zero)
//   gatherv     direct sends to root                  one per non-root with a non-empty contribution
//   allgather(v) gatherv to 0 + bcast of known size   gatherv count + (p-1 if the result is non-empty)
//   alltoall(v) direct sends, self copied locally     one per non-empty non-self segment
//   reduce      binomial fold towards 0 in rank order p-1, +1 when root != 0
//   allreduce   reduce to 0 + bcast of known size     2(p-1) for non-empty input
// Inferred counts cost one allgather of sizes (allgatherv), one gather of sizes (gatherv) or one alltoall of
// counts (alltoallv).
namespace xcomm {

namespace detail {

template <typename P>
struct is_plain_send_buf : std::false_type {};
template <typename T>
struct is_plain_send_buf<SendBuf<T>> : std::true_type {};

template <typename P>
struct is_deserializing_recv_buf : std::false_type {};
template <typename T>
struct is_deserializing_recv_buf<DeserializingRecvBuf<T>> : std::true_type {};

/// Count and displacement vectors computed during a call, handed to out-requests.
class ComputedInts {
public:
    void set(ParamKind kind, std::vector<int> values) {
        slots_[slot(kind)] = std::move(values);
    }
    std::vector<int> const& get(ParamKind kind) const {
        auto const& value = slots_[slot(kind)];
        if (!value) {
            throw UsageError(std::string(to_string(kind)) + " is not produced by this operation");
        }
        return *value;
    }

private:
    static std::size_t slot(ParamKind kind) {
        switch (kind) {
            case ParamKind::send_counts:
                return 0;
            case ParamKind::recv_counts:
                return 1;
            case ParamKind::send_displs:
                return 2;
            case ParamKind::recv_displs:
                return 3;
            default:
                throw UsageError(std::string(to_string(kind)) + " cannot be an out-parameter");
        }
    }
    std::array<std::optional<std::vector<int>>, 4> slots_;
};

/// Fills the out-requests in call order and assembles the bundle; without out-requests the result is the
/// payload itself.
template <typename T, typename... Ps>
auto make_bundle(std::vector<T> payload, ComputedInts const& computed, Ps&... params) {
    constexpr std::size_t                                N = count_outs<Ps...>;
    std::array<std::pair<ParamKind, std::vector<int>>, N> extras{};
    std::size_t                                          i    = 0;
    auto                                                 fill = [&](auto& p) {
        using P = std::remove_cvref_t<decltype(p)>;
        if constexpr (P::is_out) {
            auto const& values = computed.get(P::kind);
            if (p.data.caller_supplied()) {
                auto& target = p.data.get();
                apply_resize(target, P::policy, values.size(), std::string(to_string(P::kind)) + "_out");
                std::copy(values.begin(), values.end(), target.begin());
                if (p.data.is_reference()) {
                    extras[i] = {P::kind, values};
                } else {
                    extras[i] = {P::kind, std::move(p.data).release()};
                }
            } else {
                extras[i] = {P::kind, values};
            }
            ++i;
        }
    };
    (fill(params), ...);
    if constexpr (N == 0) {
        return payload;
    } else {
        return ResultBundle<T, N>(std::move(payload), std::move(extras));
    }
}

template <typename T>
struct RecvTarget {
    WritableStorage<T> storage;
    ResizePolicy       policy = ResizePolicy::resize_to_fit;
};

template <typename T, typename... Ps>
RecvTarget<T> take_recv_target(Ps&... params) {
    if constexpr (has_in<ParamKind::recv_buf, Ps...>) {
        auto& rb = get_in<ParamKind::recv_buf>(params...);
        using R  = std::remove_cvref_t<decltype(rb)>;
        static_assert(!is_deserializing_recv_buf<R>::value, "a deserializing recv_buf is only accepted by recv");
        static_assert(std::is_same_v<typename R::value_type, T>, "recv_buf element type differs from send_buf");
        return {std::move(rb.data), R::policy};
    } else {
        return {};
    }
}

template <ParamKind Kind, typename... Ps>
std::optional<std::span<int const>> ints_in(Ps&... params) {
    if constexpr (has_in<Kind, Ps...>) {
        return get_in<Kind>(params...).data.view();
    } else {
        return std::nullopt;
    }
}

template <ParamKind Kind, typename... Ps>
int int_value_or(int fallback, Ps&... params) {
    if constexpr (has_in<Kind, Ps...>) {
        return get_in<Kind>(params...).value;
    } else {
        return fallback;
    }
}

/// Checks one count/displacement vector locally: length p, no negative entry.
inline void check_int_vector(std::span<int const> values, int p, std::string_view op, std::string_view what) {
    if (static_cast<int>(values.size()) != p) {
        throw CountsError(
            std::string(op) + ": " + std::string(what) + " has " + std::to_string(values.size())
            + " entries, expected " + std::to_string(p)
        );
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < 0) {
            throw CountsError(
                std::string(op) + ": " + std::string(what) + "[" + std::to_string(i) + "] is negative ("
                + std::to_string(values[i]) + ")"
            );
        }
    }
}

/// Largest displs[i] + counts[i], i.e. the container length needed to hold every segment.
inline std::size_t required_extent(std::span<int const> counts, std::span<int const> displs) {
    std::size_t extent = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] > 0) {
            extent = std::max(extent, static_cast<std::size_t>(displs[i]) + static_cast<std::size_t>(counts[i]));
        }
    }
    return extent;
}

/// One int per rank, gathered everywhere.
inline std::vector<int> allgather_ints(Communicator const& comm, int local) {
    std::vector<std::int32_t> mine{local};
    auto const                bytes = allgatherv_bytes(
        comm, encode(mine), std::vector<std::size_t>(static_cast<std::size_t>(comm.size()), sizeof(std::int32_t))
    );
    auto values = decode<std::int32_t>(bytes);
    return {values.begin(), values.end()};
}

/// Transposes one int per rank pair: result[s] is what rank s holds at index rank().
inline std::vector<int> alltoall_ints(Communicator const& comm, std::span<int const> values) {
    auto const p = static_cast<std::size_t>(comm.size());
    Segments   segments;
    segments.lengths.assign(p, sizeof(std::int32_t));
    segments.offsets.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        segments.offsets[i] = i * sizeof(std::int32_t);
    }
    std::vector<std::int32_t> send(values.begin(), values.end());
    Bytes                     received(p * sizeof(std::int32_t));
    alltoallv_bytes(comm, encode(send), segments, received, segments);
    auto out = decode<std::int32_t>(received);
    return {out.begin(), out.end()};
}

/// Heavy check that every rank contributes the same number of elements.
inline void check_equal_lengths(Communicator const& comm, std::size_t local, std::string_view op) {
    auto const lengths = allgather_ints(comm, static_cast<int>(local));
    for (int r = 0; r < comm.size(); ++r) {
        if (lengths[static_cast<std::size_t>(r)] != lengths[0]) {
            throw CountsError(
                std::string(op) + ": rank " + std::to_string(r) + " contributes "
                + std::to_string(lengths[static_cast<std::size_t>(r)]) + " elements but rank 0 contributes "
                + std::to_string(lengths[0])
            );
        }
    }
}

/// Decodes `counts[r]` elements of `bytes` (packed in rank order) into `out` at `displs[r]`.
template <FixedWidth T>
void unpack_segments(
    std::span<std::byte const> bytes, std::span<int const> counts, std::span<int const> displs, std::span<T> out
) {
    constexpr auto width  = Codec<T>::element_width;
    std::size_t    offset = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) {
        auto const n = static_cast<std::size_t>(counts[r]);
        decode_into<T>(bytes.subspan(offset, n * width), out.subspan(static_cast<std::size_t>(displs[r]), n));
        offset += n * width;
    }
}

template <typename T, typename F>
T apply_op(F& fn, T const& a, T const& b) {
    return static_cast<T>(fn(a, b));
}

/// Binomial fold towards rank 0; rank 0 ends with op(... op(op(v0, v1), v2) ..., v_{p-1}) elementwise,
/// every left operand covering lower ranks than the right one.
template <FixedWidth T, typename F>
std::vector<T> reduce_to_zero(Communicator const& comm, std::vector<T> acc, F& fn) {
    int const  rank = comm.rank();
    int const  p    = comm.size();
    auto const tag  = comm.internal_tag(InternalTag::reduce);
    for (int mask = 1; mask < p; mask <<= 1) {
        if (rank & mask) {
            comm.send_raw(rank - mask, tag, encode(acc));
            return {};
        }
        if (rank + mask < p) {
            auto const other = decode<T>(comm.recv_raw(rank + mask, TagFilter::exact(tag)).payload);
            if (other.size() != acc.size()) {
                throw CountsError(
                    "reduce: rank " + std::to_string(rank + mask) + " contributes " + std::to_string(other.size())
                    + " elements, expected " + std::to_string(acc.size())
                );
            }
            for (std::size_t i = 0; i < acc.size(); ++i) {
                acc[i] = apply_op(fn, acc[i], other[i]);
            }
        }
    }
    return acc;
}

/// Copies `values` into the receive target and returns the bundle payload.
template <typename T>
std::vector<T> deliver(RecvTarget<T>& target, std::vector<T> values) {
    if (!target.storage.caller_supplied()) {
        return values;
    }
    auto& c = target.storage.get();
    apply_resize(c, target.policy, values.size(), "recv_buf");
    std::copy(values.begin(), values.end(), c.begin());
    return std::move(target.storage).release();
}

} // namespace detail

// ---------------------------------------------------------------------------------------------------------------

template <typename... Params>
auto Communicator::bcast(Params&&... params) const {
    detail::check_params<Params...>(
        {"bcast", {ParamKind::send_recv_buf}, {ParamKind::send_recv_buf, ParamKind::root}, {}}
    );
    if constexpr (detail::has_in<ParamKind::send_recv_buf, Params...>) {
        int const root_rank = detail::int_value_or<ParamKind::root>(0, params...);
        check_rank(root_rank, "root");
        auto& buf = detail::get_in<ParamKind::send_recv_buf>(params...);
        using B   = std::remove_cvref_t<decltype(buf)>;
        using T   = typename B::value_type;
        if constexpr (std::is_same_v<B, SerializedSendRecvBuf<T>>) {
            Bytes data = rank_ == root_rank ? buf.value.bytes() : Bytes{};
            data       = detail::bcast_bytes(*this, std::move(data), root_rank);
            if (rank_ != root_rank) {
                buf.value.assign(deserialize<T>(data));
            }
            return std::move(buf.value).extract();
        } else {
            auto& c    = buf.data.get();
            Bytes data = rank_ == root_rank ? encode(c) : Bytes{};
            data       = detail::bcast_bytes(*this, std::move(data), root_rank);
            if (rank_ != root_rank) {
                c = decode<T>(data);
            }
            return std::move(buf.data).release();
        }
    }
}

template <typename... Params>
auto Communicator::allgatherv(Params&&... params) const {
    detail::check_params<Params...>(
        {"allgatherv",
         {ParamKind::send_buf},
         {ParamKind::send_buf, ParamKind::recv_buf, ParamKind::recv_counts, ParamKind::recv_displs},
         {ParamKind::recv_counts, ParamKind::recv_displs}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...>) {
        using T = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
            "allgatherv takes a fixed-width send_buf; serialized values are accepted by bcast and send/recv only"
        );
        auto const local = sb.data.view();

        std::vector<int> counts;
        if (auto given = detail::ints_in<ParamKind::recv_counts>(params...)) {
            detail::check_int_vector(*given, size_, "allgatherv", "recv_counts");
            counts.assign(given->begin(), given->end());
            if (static_cast<std::size_t>(counts[static_cast<std::size_t>(rank_)]) != local.size()) {
                throw CountsError(
                    "allgatherv: recv_counts[" + std::to_string(rank_) + "] = "
                    + std::to_string(counts[static_cast<std::size_t>(rank_)]) + " but send_buf holds "
                    + std::to_string(local.size()) + " elements"
                );
            }
            if (config_.heavy()) {
                auto const actual = detail::allgather_ints(*this, static_cast<int>(local.size()));
                for (int r = 0; r < size_; ++r) {
                    if (actual[static_cast<std::size_t>(r)] != counts[static_cast<std::size_t>(r)]) {
                        throw CountsError(
                            "allgatherv: recv_counts[" + std::to_string(r) + "] = "
                            + std::to_string(counts[static_cast<std::size_t>(r)]) + " but rank " + std::to_string(r)
                            + " sends " + std::to_string(actual[static_cast<std::size_t>(r)])
                        );
                    }
                }
            }
        } else {
            counts = detail::allgather_ints(*this, static_cast<int>(local.size()));
        }

        std::vector<int> displs;
        if (auto given = detail::ints_in<ParamKind::recv_displs>(params...)) {
            detail::check_int_vector(*given, size_, "allgatherv", "recv_displs");
            displs.assign(given->begin(), given->end());
        } else {
            displs = exclusive_prefix_sum(counts, "allgatherv recv_displs");
        }

        constexpr auto           width = Codec<T>::element_width;
        std::vector<std::size_t> byte_counts(counts.size());
        for (std::size_t r = 0; r < counts.size(); ++r) {
            byte_counts[r] = static_cast<std::size_t>(counts[r]) * width;
        }
        auto const bytes = detail::allgatherv_bytes(*this, encode(local), byte_counts);

        auto  target = detail::take_recv_target<T>(params...);
        auto& c      = target.storage.get();
        apply_resize(c, target.policy, detail::required_extent(counts, displs), "recv_buf");
        detail::unpack_segments<T>(bytes, counts, displs, c);

        detail::ComputedInts computed;
        computed.set(ParamKind::recv_counts, std::move(counts));
        computed.set(ParamKind::recv_displs, std::move(displs));
        return detail::make_bundle<T>(std::move(target.storage).release(), computed, params...);
    }
}

template <typename... Params>
auto Communicator::gatherv(Params&&... params) const {
    detail::check_params<Params...>(
        {"gatherv",
         {ParamKind::send_buf},
         {ParamKind::send_buf, ParamKind::recv_buf, ParamKind::recv_counts, ParamKind::recv_displs, ParamKind::root},
         {ParamKind::recv_counts, ParamKind::recv_displs}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...>) {
        using T = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
            "gatherv takes a fixed-width send_buf"
        );
        int const root_rank = detail::int_value_or<ParamKind::root>(0, params...);
        check_rank(root_rank, "root");
        auto const     local    = sb.data.view();
        bool const     at_root  = rank_ == root_rank;
        constexpr auto width    = Codec<T>::element_width;
        auto const     size_tag = InternalTag::gather;

        std::vector<int> counts;
        if (auto given = detail::ints_in<ParamKind::recv_counts>(params...); given && at_root) {
            detail::check_int_vector(*given, size_, "gatherv", "recv_counts");
            counts.assign(given->begin(), given->end());
        } else if (!given) {
            std::vector<std::int32_t> mine{static_cast<std::int32_t>(local.size())};
            auto const                sizes = detail::gatherv_bytes(
                *this, encode(mine), root_rank,
                std::vector<std::size_t>(static_cast<std::size_t>(size_), sizeof(std::int32_t)), size_tag
            );
            if (at_root) {
                auto const decoded = decode<std::int32_t>(sizes);
                counts.assign(decoded.begin(), decoded.end());
            }
        }

        std::vector<int> displs;
        if (at_root) {
            if (auto given = detail::ints_in<ParamKind::recv_displs>(params...)) {
                detail::check_int_vector(*given, size_, "gatherv", "recv_displs");
                displs.assign(given->begin(), given->end());
            } else {
                displs = exclusive_prefix_sum(counts, "gatherv recv_displs");
            }
        }

        std::vector<std::size_t> byte_counts(counts.size());
        for (std::size_t r = 0; r < counts.size(); ++r) {
            byte_counts[r] = static_cast<std::size_t>(counts[r]) * width;
        }
        auto const bytes  = detail::gatherv_bytes(*this, encode(local), root_rank, byte_counts);
        auto       target = detail::take_recv_target<T>(params...);
        if (at_root) {
            auto& c = target.storage.get();
            apply_resize(c, target.policy, detail::required_extent(counts, displs), "recv_buf");
            detail::unpack_segments<T>(bytes, counts, displs, c);
        }

        detail::ComputedInts computed;
        computed.set(ParamKind::recv_counts, std::move(counts));
        computed.set(ParamKind::recv_displs, std::move(displs));
        return detail::make_bundle<T>(
            at_root ? std::move(target.storage).release() : std::vector<T>{}, computed, params...
        );
    }
}

template <typename... Params>
auto Communicator::allgather(Params&&... params) const {
    detail::check_params<Params...>(
        {"allgather", {}, {ParamKind::send_buf, ParamKind::send_recv_buf, ParamKind::recv_buf}, {}}
    );
    constexpr bool has_send    = detail::has_in<ParamKind::send_buf, Params...>;
    constexpr bool has_inplace = detail::has_in<ParamKind::send_recv_buf, Params...>;
    if constexpr (!has_send && !has_inplace) {
        throw MissingParameterError("allgather", {"send_buf or send_recv_buf"});
    } else if constexpr (has_send && has_inplace) {
        throw UsageError("allgather: pass either send_buf or send_recv_buf, not both");
    } else {
        using T                = detail::element_type_t<Params...>;
        constexpr auto width   = Codec<T>::element_width;
        auto const     p       = static_cast<std::size_t>(size_);
        auto const     gather  = [&](std::span<T const> contribution) {
            std::vector<std::size_t> byte_counts(p, contribution.size() * width);
            return detail::allgatherv_bytes(*this, encode(contribution), byte_counts);
        };

        if constexpr (has_inplace) {
            static_assert(!detail::has_in<ParamKind::recv_buf, Params...>, "in-place allgather takes no recv_buf");
            auto& buf = detail::get_in<ParamKind::send_recv_buf>(params...);
            static_assert(
                std::is_same_v<std::remove_cvref_t<decltype(buf)>, SendRecvBuf<T>>,
                "in-place allgather takes a fixed-width send_recv_buf"
            );
            auto& c = buf.data.get();
            if (c.size() % p != 0) {
                throw UsageError(
                    "allgather: in-place buffer holds " + std::to_string(c.size())
                    + " elements, not a multiple of the communicator size " + std::to_string(p)
                );
            }
            auto const k = c.size() / p;
            if (config_.heavy()) {
                detail::check_equal_lengths(*this, c.size(), "allgather");
            }
            auto const bytes = gather(std::span<T const>(c).subspan(static_cast<std::size_t>(rank_) * k, k));
            decode_into<T>(bytes, c);
            return std::move(buf.data).release();
        } else {
            auto& sb = detail::get_in<ParamKind::send_buf>(params...);
            static_assert(
                detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
                "allgather takes a fixed-width send_buf"
            );
            auto const local = sb.data.view();
            if (config_.heavy()) {
                detail::check_equal_lengths(*this, local.size(), "allgather");
            }
            auto const bytes  = gather(local);
            auto       target = detail::take_recv_target<T>(params...);
            auto&      c      = target.storage.get();
            apply_resize(c, target.policy, local.size() * p, "recv_buf");
            decode_into<T>(bytes, c);
            return std::move(target.storage).release();
        }
    }
}

template <typename... Params>
auto Communicator::alltoall(Params&&... params) const {
    detail::check_params<Params...>(
        {"alltoall", {ParamKind::send_buf}, {ParamKind::send_buf, ParamKind::recv_buf}, {}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...>) {
        using T  = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
            "alltoall takes a fixed-width send_buf"
        );
        auto const local = sb.data.view();
        auto const p     = static_cast<std::size_t>(size_);
        if (local.size() % p != 0) {
            throw UsageError(
                "alltoall: send_buf holds " + std::to_string(local.size())
                + " elements, not a multiple of the communicator size " + std::to_string(p)
            );
        }
        if (config_.heavy()) {
            detail::check_equal_lengths(*this, local.size(), "alltoall");
        }
        constexpr auto   width = Codec<T>::element_width;
        auto const       block = local.size() / p * width;
        detail::Segments segments;
        segments.lengths.assign(p, block);
        segments.offsets.resize(p);
        for (std::size_t i = 0; i < p; ++i) {
            segments.offsets[i] = i * block;
        }
        Bytes received(local.size() * width);
        detail::alltoallv_bytes(*this, encode(local), segments, received, segments);

        auto  target = detail::take_recv_target<T>(params...);
        auto& c      = target.storage.get();
        apply_resize(c, target.policy, local.size(), "recv_buf");
        decode_into<T>(received, c);
        return std::move(target.storage).release();
    }
}

template <typename... Params>
auto Communicator::alltoallv(Params&&... params) const {
    detail::check_params<Params...>(
        {"alltoallv",
         {ParamKind::send_buf, ParamKind::send_counts},
         {ParamKind::send_buf, ParamKind::send_counts, ParamKind::send_displs, ParamKind::recv_buf,
          ParamKind::recv_counts, ParamKind::recv_displs},
         {ParamKind::send_displs, ParamKind::recv_counts, ParamKind::recv_displs}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...> && detail::has_in<ParamKind::send_counts, Params...>) {
        using T  = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
            "alltoallv takes a fixed-width send_buf"
        );
        auto const local       = sb.data.view();
        auto const send_counts = *detail::ints_in<ParamKind::send_counts>(params...);
        auto const given_recv  = detail::ints_in<ParamKind::recv_counts>(params...);

        if (config_.light()) {
            auto const report = validate_counts(*this, send_counts, config_, given_recv);
            if (!report.ok()) {
                throw CountsError("alltoallv: " + report.message());
            }
        }
        detail::check_int_vector(send_counts, size_, "alltoallv", "send_counts");

        std::vector<int> send_displs;
        if (auto given = detail::ints_in<ParamKind::send_displs>(params...)) {
            detail::check_int_vector(*given, size_, "alltoallv", "send_displs");
            send_displs.assign(given->begin(), given->end());
        } else {
            send_displs = exclusive_prefix_sum(send_counts, "alltoallv send_displs");
        }
        auto const extent = detail::required_extent(send_counts, send_displs);
        if (extent > local.size()) {
            throw CountsError(
                "alltoallv: send segments reach element " + std::to_string(extent) + " but send_buf holds "
                + std::to_string(local.size())
            );
        }

        std::vector<int> recv_counts;
        if (given_recv) {
            detail::check_int_vector(*given_recv, size_, "alltoallv", "recv_counts");
            recv_counts.assign(given_recv->begin(), given_recv->end());
        } else {
            recv_counts = detail::alltoall_ints(*this, send_counts);
        }
        std::vector<int> recv_displs;
        if (auto given = detail::ints_in<ParamKind::recv_displs>(params...)) {
            detail::check_int_vector(*given, size_, "alltoallv", "recv_displs");
            recv_displs.assign(given->begin(), given->end());
        } else {
            recv_displs = exclusive_prefix_sum(recv_counts, "alltoallv recv_displs");
        }

        constexpr auto   width = Codec<T>::element_width;
        auto const       p     = static_cast<std::size_t>(size_);
        detail::Segments send_segments, recv_segments;
        for (auto* s: {&send_segments, &recv_segments}) {
            s->offsets.resize(p);
            s->lengths.resize(p);
        }
        for (std::size_t i = 0; i < p; ++i) {
            send_segments.offsets[i] = static_cast<std::size_t>(send_displs[i]) * width;
            send_segments.lengths[i] = static_cast<std::size_t>(send_counts[i]) * width;
            recv_segments.offsets[i] = static_cast<std::size_t>(recv_displs[i]) * width;
            recv_segments.lengths[i] = static_cast<std::size_t>(recv_counts[i]) * width;
        }
        auto const recv_extent = detail::required_extent(recv_counts, recv_displs);
        Bytes      received(recv_extent * width);
        detail::alltoallv_bytes(*this, encode(local.first(extent)), send_segments, received, recv_segments);

        auto  target = detail::take_recv_target<T>(params...);
        auto& c      = target.storage.get();
        apply_resize(c, target.policy, recv_extent, "recv_buf");
        for (std::size_t i = 0; i < p; ++i) {
            decode_into<T>(
                std::span<std::byte const>(received).subspan(recv_segments.offsets[i], recv_segments.lengths[i]),
                std::span<T>(c).subspan(static_cast<std::size_t>(recv_displs[i]), static_cast<std::size_t>(recv_counts[i]))
            );
        }

        detail::ComputedInts computed;
        computed.set(ParamKind::send_displs, std::move(send_displs));
        computed.set(ParamKind::recv_counts, std::move(recv_counts));
        computed.set(ParamKind::recv_displs, std::move(recv_displs));
        return detail::make_bundle<T>(std::move(target.storage).release(), computed, params...);
    }
}

template <typename... Params>
auto Communicator::reduce(Params&&... params) const {
    detail::check_params<Params...>(
        {"reduce",
         {ParamKind::send_buf, ParamKind::op},
         {ParamKind::send_buf, ParamKind::op, ParamKind::root, ParamKind::recv_buf},
         {}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...> && detail::has_in<ParamKind::op, Params...>) {
        using T  = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value, "reduce takes a fixed-width send_buf"
        );
        auto&     fn        = detail::get_in<ParamKind::op>(params...).fn;
        int const root_rank = detail::int_value_or<ParamKind::root>(0, params...);
        check_rank(root_rank, "root");
        auto const local = sb.data.view();
        if (config_.heavy()) {
            detail::check_equal_lengths(*this, local.size(), "reduce");
        }
        auto acc = detail::reduce_to_zero<T>(*this, std::vector<T>(local.begin(), local.end()), fn);
        if (root_rank != 0) {
            auto const tag = internal_tag(InternalTag::reduce_result);
            if (rank_ == 0) {
                send_raw(root_rank, tag, encode(acc));
                acc.clear();
            } else if (rank_ == root_rank) {
                acc = decode<T>(recv_raw(0, TagFilter::exact(tag)).payload);
            }
        }
        auto target = detail::take_recv_target<T>(params...);
        if (rank_ != root_rank) {
            return std::vector<T>{};
        }
        return detail::deliver(target, std::move(acc));
    }
}

template <typename... Params>
auto Communicator::allreduce(Params&&... params) const {
    detail::check_params<Params...>(
        {"allreduce", {ParamKind::send_buf, ParamKind::op}, {ParamKind::send_buf, ParamKind::op, ParamKind::recv_buf}, {}
        }
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...> && detail::has_in<ParamKind::op, Params...>) {
        using T  = detail::element_type_t<Params...>;
        auto& sb = detail::get_in<ParamKind::send_buf>(params...);
        static_assert(
            detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value,
            "allreduce takes a fixed-width send_buf"
        );
        auto&      fn    = detail::get_in<ParamKind::op>(params...).fn;
        auto const local = sb.data.view();
        if (config_.heavy()) {
            detail::check_equal_lengths(*this, local.size(), "allreduce");
        }
        auto       acc   = detail::reduce_to_zero<T>(*this, std::vector<T>(local.begin(), local.end()), fn);
        auto const bytes = detail::bcast_bytes(*this, encode(acc), 0, local.size() * Codec<T>::element_width);
        auto       target = detail::take_recv_target<T>(params...);
        return detail::deliver(target, decode<T>(bytes));
    }
}

// ---------------------------------------------------------------------------------------------------------------
// Flattening of destination -> message containers
// ---------------------------------------------------------------------------------------------------------------

/// Contiguous send buffer plus per-destination counts.
template <FixedWidth T>
struct FlattenedMessages {
    std::vector<T>   buffer;
    std::vector<int> send_counts;

    /// Invokes `fn(send_buf(...), send_counts(...))`, handing over both vectors.
    template <typename F>
    decltype(auto) call(F&& fn) && {
        return std::forward<F>(fn)(xcomm::send_buf(std::move(buffer)), xcomm::send_counts(std::move(send_counts)));
    }
};

/// Flattens (destination, messages) pairs: the buffer holds the messages by ascending destination, pairs
/// with the same destination kept in iteration order.
template <typename Container>
auto with_flattened(Container const& messages, int size) {
    using Messages = std::remove_cvref_t<decltype(std::begin(messages)->second)>;
    using T        = typename Messages::value_type;
    FlattenedMessages<T> out;
    out.send_counts.assign(static_cast<std::size_t>(size), 0);
    for (auto const& [dst, msgs]: messages) {
        if (static_cast<long long>(dst) < 0 || static_cast<long long>(dst) >= size) {
            throw UsageError(
                "with_flattened: destination " + std::to_string(dst) + " is not a rank of a group of size "
                + std::to_string(size)
            );
        }
        out.send_counts[static_cast<std::size_t>(dst)] += static_cast<int>(msgs.size());
    }
    auto cursor = exclusive_prefix_sum(out.send_counts, "with_flattened");
    out.buffer.resize(cursor.empty() ? 0 : static_cast<std::size_t>(cursor.back() + out.send_counts.back()));
    for (auto const& [dst, msgs]: messages) {
        auto& at = cursor[static_cast<std::size_t>(dst)];
        std::copy(msgs.begin(), msgs.end(), out.buffer.begin() + at);
        at += static_cast<int>(msgs.size());
    }
    return out;
}

} // namespace xcomm
