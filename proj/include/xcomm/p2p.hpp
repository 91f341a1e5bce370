#pragma once

#include <type_traits>
#include <utility>
#include <vector>

#include "xcomm/collectives.hpp"
#include "xcomm/communicator.hpp"
#include "xcomm/params.hpp"
#include "xcomm/serialization.hpp"

namespace xcomm {

namespace detail {

template <typename... Ps>
TagFilter recv_tag_filter(Communicator const& comm, Ps&... params) {
    int const t = int_value_or<ParamKind::tag>(any_tag, params...);
    return t == any_tag ? comm.any_user_tag() : TagFilter::exact(comm.user_tag(t));
}

template <typename... Ps>
int recv_source(Communicator const& comm, Ps&... params) {
    int const src = int_value_or<ParamKind::source>(any_source, params...);
    if (src != any_source) {
        comm.check_rank(src, "source");
    }
    return src;
}

/// Decodes a received fixed-width payload, checking an announced recv_count.
template <FixedWidth T, typename... Ps>
std::vector<T> decode_received(std::span<std::byte const> payload, Ps&... params) {
    auto values = decode<T>(payload);
    if constexpr (has_in<ParamKind::recv_count, Ps...>) {
        int const expected = get_in<ParamKind::recv_count>(params...).value;
        if (static_cast<int>(values.size()) != expected) {
            throw CountsError(
                "recv: expected " + std::to_string(expected) + " elements, received " + std::to_string(values.size())
            );
        }
    }
    return values;
}

} // namespace detail

/// send(send_buf(...), destination(d) [, tag(t)]). A serialized send_buf carries its archive.
template <typename... Params>
void Communicator::send(Params&&... params) const {
    detail::check_params<Params...>(
        {"send", {ParamKind::send_buf, ParamKind::destination}, {ParamKind::send_buf, ParamKind::destination, ParamKind::tag}, {}}
    );
    if constexpr (detail::has_in<ParamKind::send_buf, Params...> && detail::has_in<ParamKind::destination, Params...>) {
        int const dst = detail::get_in<ParamKind::destination>(params...).value;
        check_rank(dst, "destination");
        Tag const t  = user_tag(detail::int_value_or<ParamKind::tag>(0, params...));
        auto&     sb = detail::get_in<ParamKind::send_buf>(params...);
        if constexpr (detail::is_plain_send_buf<std::remove_cvref_t<decltype(sb)>>::value) {
            send_raw(dst, t, encode(sb.data.view()));
        } else {
            send_raw(dst, t, sb.value.bytes());
        }
    }
}

/// recv<T>([source(s)], [tag(t)], [recv_count(n)], [recv_buf(...)]).
/// Returns the elements, or the reconstructed value for recv_buf(as_deserializable<K>()). When recv_buf refers
/// to a caller container the data lands there and the returned vector is empty.
template <typename T, typename... Params>
auto Communicator::recv(Params&&... params) const {
    detail::check_params<Params...>(
        {"recv", {}, {ParamKind::source, ParamKind::tag, ParamKind::recv_count, ParamKind::recv_buf}, {}}
    );
    using Deduced = std::conditional_t<std::is_void_v<T>, detail::element_type_t<Params...>, T>;
    static_assert(!std::is_void_v<Deduced>, "recv needs an element type: recv<T>(...) or a recv_buf");
    int const       src    = detail::recv_source(*this, params...);
    TagFilter const filter = detail::recv_tag_filter(*this, params...);

    if constexpr (detail::has_in<ParamKind::recv_buf, Params...>) {
        auto& rb = detail::get_in<ParamKind::recv_buf>(params...);
        using R  = std::remove_cvref_t<decltype(rb)>;
        if constexpr (detail::is_deserializing_recv_buf<R>::value) {
            return rb.adapter.decode(recv_raw(src, filter).payload);
        } else {
            static_assert(std::is_same_v<typename R::value_type, Deduced>, "recv_buf element type differs");
            auto  values = detail::decode_received<Deduced>(recv_raw(src, filter).payload, params...);
            auto& c      = rb.data.get();
            apply_resize(c, R::policy, values.size(), "recv_buf");
            std::copy(values.begin(), values.end(), c.begin());
            return std::move(rb.data).release();
        }
    } else {
        return detail::decode_received<Deduced>(recv_raw(src, filter).payload, params...);
    }
}

} // namespace xcomm
