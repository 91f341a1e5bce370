#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "xcomm/datatypes.hpp"
#include "xcomm/errors.hpp"
#include "xcomm/serialization.hpp"

namespace xcomm {

// ---------------------------------------------------------------------------------------------------------------
// Policies and configuration
// ---------------------------------------------------------------------------------------------------------------

/// What a receive-side container may do when the result does not fit.
enum class ResizePolicy {
    no_resize,     ///< leave the container alone; it must already be large enough (default for caller containers)
    grow_only,     ///< enlarge when too small, otherwise keep the current length
    resize_to_fit, ///< always resize to exactly the required length
};

inline constexpr ResizePolicy no_resize     = ResizePolicy::no_resize;
inline constexpr ResizePolicy grow_only     = ResizePolicy::grow_only;
inline constexpr ResizePolicy resize_to_fit = ResizePolicy::resize_to_fit;

enum class AssertionLevel { none, light, heavy };

struct AssertionConfig {
    AssertionLevel level = AssertionLevel::light;

    bool light() const noexcept {
        return level != AssertionLevel::none;
    }
    bool heavy() const noexcept {
        return level == AssertionLevel::heavy;
    }

    /// Level from the ASSERT_LEVEL environment variable, `light` when unset.
    static AssertionConfig from_env();
};

AssertionLevel   parse_assertion_level(std::string_view name);
std::string_view to_string(AssertionLevel level);

/// Every named parameter has one kind. Out-requests share the kind of the value they return.
enum class ParamKind {
    send_buf,
    send_recv_buf,
    recv_buf,
    send_counts,
    recv_counts,
    send_displs,
    recv_displs,
    root,
    op,
    destination,
    source,
    tag,
    recv_count,
};

std::string_view to_string(ParamKind kind);

/// Applies `policy` so that `container` can hold `required` elements. Throws CapacityError naming `param`
/// when the policy is no_resize and the container is too short.
template <typename Container>
void apply_resize(Container& container, ResizePolicy policy, std::size_t required, std::string_view param) {
    switch (policy) {
        case ResizePolicy::resize_to_fit:
            container.resize(required);
            return;
        case ResizePolicy::grow_only:
            if (container.size() < required) {
                container.resize(required);
            }
            return;
        case ResizePolicy::no_resize:
            if (container.size() < required) {
                throw CapacityError(
                    std::string(param) + ": container holds " + std::to_string(container.size())
                    + " elements but " + std::to_string(required) + " are required (policy no_resize)"
                );
            }
            return;
    }
}

// ---------------------------------------------------------------------------------------------------------------
// Parameter descriptors
// ---------------------------------------------------------------------------------------------------------------

namespace detail {

/// Either a non-owning view or an owned vector.
template <typename T>
class ReadOnlyStorage {
public:
    explicit ReadOnlyStorage(std::span<T const> view) : storage_(view) {}
    explicit ReadOnlyStorage(std::vector<T>&& owned) : storage_(std::move(owned)) {}

    std::span<T const> view() const {
        if (auto const* view = std::get_if<std::span<T const>>(&storage_)) {
            return *view;
        }
        return std::get<std::vector<T>>(storage_);
    }
    bool owns() const noexcept {
        return std::holds_alternative<std::vector<T>>(storage_);
    }
    std::vector<T> release() && {
        if (auto* owned = std::get_if<std::vector<T>>(&storage_)) {
            return std::move(*owned);
        }
        auto v = view();
        return {v.begin(), v.end()};
    }

private:
    std::variant<std::span<T const>, std::vector<T>> storage_;
};

/// A writable container: the caller's (by reference), one moved in, or none (library allocates).
template <typename T>
class WritableStorage {
public:
    WritableStorage() = default;
    explicit WritableStorage(std::vector<T>& ref) : ref_(&ref) {}
    explicit WritableStorage(std::vector<T>&& owned) : owned_(std::move(owned)), has_owned_(true) {}

    bool is_reference() const noexcept {
        return ref_ != nullptr;
    }
    bool caller_supplied() const noexcept {
        return ref_ != nullptr || has_owned_;
    }
    std::vector<T>& get() noexcept {
        return ref_ ? *ref_ : owned_;
    }
    std::vector<T> release() && {
        return ref_ ? std::vector<T>{} : std::move(owned_);
    }

private:
    std::vector<T>* ref_ = nullptr;
    std::vector<T>  owned_;
    bool            has_owned_ = false;
};

} // namespace detail

template <typename T>
struct SendBuf {
    static constexpr ParamKind kind   = ParamKind::send_buf;
    static constexpr bool      is_out = false;
    using value_type                  = T;
    detail::ReadOnlyStorage<T> data;
};

template <typename T>
struct SerializedSendBuf {
    static constexpr ParamKind kind   = ParamKind::send_buf;
    static constexpr bool      is_out = false;
    using value_type                  = T;
    SerializedValue<T> value;
};

/// Input and output at once; for in-place collectives and for broadcast.
template <typename T>
struct SendRecvBuf {
    static constexpr ParamKind kind   = ParamKind::send_recv_buf;
    static constexpr bool      is_out = false;
    using value_type                  = T;
    detail::WritableStorage<T> data;
};

template <typename T>
struct SerializedSendRecvBuf {
    static constexpr ParamKind kind   = ParamKind::send_recv_buf;
    static constexpr bool      is_out = false;
    using value_type                  = T;
    SerializedValue<T> value;
};

template <typename T, ResizePolicy Policy>
struct RecvBuf {
    static constexpr ParamKind    kind   = ParamKind::recv_buf;
    static constexpr bool         is_out = false;
    static constexpr ResizePolicy policy = Policy;
    using value_type                     = T;
    detail::WritableStorage<T> data;
};

template <typename T>
struct DeserializingRecvBuf {
    static constexpr ParamKind kind   = ParamKind::recv_buf;
    static constexpr bool      is_out = false;
    using value_type                  = T;
    Deserializable<T> adapter;
};

/// Counts or displacements supplied by the caller.
template <ParamKind Kind>
struct IntsIn {
    static constexpr ParamKind kind   = Kind;
    static constexpr bool      is_out = false;
    detail::ReadOnlyStorage<int> data;
};

/// Request to return a count/displacement vector the library computes anyway.
template <ParamKind Kind, ResizePolicy Policy>
struct IntsOut {
    static constexpr ParamKind    kind   = Kind;
    static constexpr bool         is_out = true;
    static constexpr ResizePolicy policy = Policy;
    detail::WritableStorage<int>  data;
};

template <ParamKind Kind>
struct IntValue {
    static constexpr ParamKind kind   = Kind;
    static constexpr bool      is_out = false;
    int                        value;
};

/// Marks a user operation as non-commutative. Reductions always fold in rank order, so the flag documents
/// intent and is checked by nothing else.
struct NonCommutative {};
inline constexpr NonCommutative non_commutative{};

template <typename F>
struct OpParam {
    static constexpr ParamKind kind   = ParamKind::op;
    static constexpr bool      is_out = false;
    F                          fn;
    bool                       commutative = true;
};

// --- factories -------------------------------------------------------------------------------------------------

template <FixedWidth T>
SendBuf<T> send_buf(std::vector<T> const& values) {
    return {detail::ReadOnlyStorage<T>(std::span<T const>(values))};
}
template <FixedWidth T>
SendBuf<T> send_buf(std::vector<T>&& values) {
    return {detail::ReadOnlyStorage<T>(std::move(values))};
}
template <FixedWidth T>
SendBuf<T> send_buf(std::span<T const> values) {
    return {detail::ReadOnlyStorage<T>(values)};
}
template <FixedWidth T>
SendBuf<T> send_buf(std::span<T> values) {
    return {detail::ReadOnlyStorage<T>(std::span<T const>(values))};
}
template <FixedWidth T>
SendBuf<T> send_buf(std::initializer_list<T> values) {
    return {detail::ReadOnlyStorage<T>(std::vector<T>(values))};
}
/// A single value.
template <FixedWidth T>
SendBuf<T> send_buf(T const& value) {
    return {detail::ReadOnlyStorage<T>(std::vector<T>{value})};
}
template <typename T>
SerializedSendBuf<T> send_buf(SerializedValue<T> value) {
    return {std::move(value)};
}

template <FixedWidth T>
SendRecvBuf<T> send_recv_buf(std::vector<T>& values) {
    return {detail::WritableStorage<T>(values)};
}
template <FixedWidth T>
SendRecvBuf<T> send_recv_buf(std::vector<T>&& values) {
    return {detail::WritableStorage<T>(std::move(values))};
}
template <typename T>
SerializedSendRecvBuf<T> send_recv_buf(SerializedValue<T> value) {
    return {std::move(value)};
}

template <ResizePolicy Policy = ResizePolicy::no_resize, FixedWidth T>
RecvBuf<T, Policy> recv_buf(std::vector<T>& target) {
    return {detail::WritableStorage<T>(target)};
}
template <ResizePolicy Policy = ResizePolicy::no_resize, FixedWidth T>
RecvBuf<T, Policy> recv_buf(std::vector<T>&& target) {
    return {detail::WritableStorage<T>(std::move(target))};
}
template <typename T>
DeserializingRecvBuf<T> recv_buf(Deserializable<T> adapter) {
    return {adapter};
}

#define XCOMM_INTS_PARAM(name, kind_value)                                                                          \
    inline IntsIn<kind_value> name(std::vector<int> const& values) {                                                \
        return {detail::ReadOnlyStorage<int>(std::span<int const>(values))};                                        \
    }                                                                                                               \
    inline IntsIn<kind_value> name(std::vector<int>&& values) {                                                     \
        return {detail::ReadOnlyStorage<int>(std::move(values))};                                                   \
    }                                                                                                               \
    inline IntsIn<kind_value> name(std::span<int const> values) {                                                   \
        return {detail::ReadOnlyStorage<int>(values)};                                                              \
    }                                                                                                               \
    inline IntsIn<kind_value> name(std::initializer_list<int> values) {                                             \
        return {detail::ReadOnlyStorage<int>(std::vector<int>(values))};                                            \
    }                                                                                                               \
    template <ResizePolicy Policy = ResizePolicy::resize_to_fit>                                                   \
    IntsOut<kind_value, Policy> name##_out() {                                                                      \
        return {};                                                                                                  \
    }                                                                                                               \
    template <ResizePolicy Policy = ResizePolicy::no_resize>                                                       \
    IntsOut<kind_value, Policy> name##_out(std::vector<int>& target) {                                              \
        return {detail::WritableStorage<int>(target)};                                                              \
    }                                                                                                               \
    template <ResizePolicy Policy = ResizePolicy::no_resize>                                                       \
    IntsOut<kind_value, Policy> name##_out(std::vector<int>&& target) {                                             \
        return {detail::WritableStorage<int>(std::move(target))};                                                   \
    }

XCOMM_INTS_PARAM(send_counts, ParamKind::send_counts)
XCOMM_INTS_PARAM(recv_counts, ParamKind::recv_counts)
XCOMM_INTS_PARAM(send_displs, ParamKind::send_displs)
XCOMM_INTS_PARAM(recv_displs, ParamKind::recv_displs)

#undef XCOMM_INTS_PARAM

inline IntValue<ParamKind::root> root(int rank) {
    return {rank};
}
inline IntValue<ParamKind::destination> destination(int rank) {
    return {rank};
}
inline IntValue<ParamKind::source> source(int rank) {
    return {rank};
}
inline IntValue<ParamKind::tag> tag(int value) {
    return {value};
}
inline IntValue<ParamKind::recv_count> recv_count(int value) {
    return {value};
}

template <typename F>
OpParam<std::decay_t<F>> op(F&& fn) {
    return {std::forward<F>(fn), true};
}
template <typename F>
OpParam<std::decay_t<F>> op(F&& fn, NonCommutative) {
    return {std::forward<F>(fn), false};
}

/// Builtin reduction operations.
namespace ops {
using plus        = std::plus<>;
using multiplies  = std::multiplies<>;
using logical_and = std::logical_and<>;
using logical_or  = std::logical_or<>;
struct min {
    template <typename T>
    T operator()(T const& a, T const& b) const {
        return b < a ? b : a;
    }
};
struct max {
    template <typename T>
    T operator()(T const& a, T const& b) const {
        return a < b ? b : a;
    }
};
} // namespace ops

// ---------------------------------------------------------------------------------------------------------------
// Parameter-pack inspection
// ---------------------------------------------------------------------------------------------------------------

namespace detail {

template <ParamKind Kind, bool Out, typename... Ps>
inline constexpr std::size_t count_params = ((std::remove_cvref_t<Ps>::kind == Kind
                                              && std::remove_cvref_t<Ps>::is_out == Out)
                                             + ... + 0);

template <ParamKind Kind, typename... Ps>
inline constexpr bool has_in = count_params<Kind, false, Ps...> > 0;

template <ParamKind Kind, typename... Ps>
inline constexpr bool has_out = count_params<Kind, true, Ps...> > 0;

template <typename... Ps>
inline constexpr std::size_t count_outs = (std::remove_cvref_t<Ps>::is_out + ... + 0);

template <ParamKind Kind, bool Out, typename... Ps>
constexpr std::size_t index_of() {
    constexpr std::array<bool, sizeof...(Ps)> hits{
        (std::remove_cvref_t<Ps>::kind == Kind && std::remove_cvref_t<Ps>::is_out == Out)...};
    for (std::size_t i = 0; i < hits.size(); ++i) {
        if (hits[i]) {
            return i;
        }
    }
    return hits.size();
}

/// Reference to the first in-parameter of `Kind`.
template <ParamKind Kind, typename... Ps>
decltype(auto) get_in(Ps&... params) {
    constexpr auto idx = index_of<Kind, false, Ps...>();
    static_assert(idx < sizeof...(Ps), "parameter not present");
    return std::get<idx>(std::tie(params...));
}

template <typename P>
struct buffer_value_type {
    using type = void;
};
template <typename P>
    requires(
        std::remove_cvref_t<P>::kind == ParamKind::send_buf || std::remove_cvref_t<P>::kind == ParamKind::send_recv_buf
        || std::remove_cvref_t<P>::kind == ParamKind::recv_buf
    )
struct buffer_value_type<P> {
    using type = typename std::remove_cvref_t<P>::value_type;
};

template <typename... Ts>
struct first_non_void {
    using type = void;
};
template <typename T, typename... Ts>
struct first_non_void<T, Ts...> {
    using type = std::conditional_t<std::is_void_v<T>, typename first_non_void<Ts...>::type, T>;
};

/// Element type deduced from the first buffer parameter, or void when none is present.
template <typename... Ps>
using element_type_t = typename first_non_void<typename buffer_value_type<Ps>::type...>::type;

/// Which parameters an operation accepts and which it requires.
struct ParamSpec {
    std::string_view                   operation;
    std::initializer_list<ParamKind>   required;
    std::initializer_list<ParamKind>   accepted_in;
    std::initializer_list<ParamKind>   accepted_out;
};

/// Runtime check of a call's parameter set: rejects unsupported and duplicate parameters and reports every
/// missing required parameter in one diagnostic.
template <typename... Ps>
void check_params(ParamSpec const& spec) {
    auto contains = [](std::initializer_list<ParamKind> list, ParamKind kind) {
        for (auto k: list) {
            if (k == kind) {
                return true;
            }
        }
        return false;
    };
    constexpr std::array<std::pair<ParamKind, bool>, sizeof...(Ps)> given{
        std::pair{std::remove_cvref_t<Ps>::kind, std::remove_cvref_t<Ps>::is_out}...};
    for (std::size_t i = 0; i < given.size(); ++i) {
        auto const [kind, out] = given[i];
        if (!contains(out ? spec.accepted_out : spec.accepted_in, kind)) {
            throw UsageError(
                std::string(spec.operation) + ": parameter " + std::string(to_string(kind)) + (out ? "_out" : "")
                + " is not accepted (it would be ignored)"
            );
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (given[j].first == kind) {
                throw UsageError(
                    std::string(spec.operation) + ": parameter " + std::string(to_string(kind))
                    + " given more than once"
                );
            }
        }
    }
    std::vector<std::string> missing;
    for (auto kind: spec.required) {
        bool found = false;
        for (auto const& [k, out]: given) {
            found = found || (k == kind && !out);
        }
        if (!found) {
            missing.emplace_back(to_string(kind));
        }
    }
    if (!missing.empty()) {
        throw MissingParameterError(std::string(spec.operation), std::move(missing));
    }
}

} // namespace detail

// ---------------------------------------------------------------------------------------------------------------
// Result bundle
// ---------------------------------------------------------------------------------------------------------------

/// Values returned by a collective: the receive payload, then one entry per out-request in call order.
///
/// When the caller passed its receive container by reference the data lands there and the bundle's payload
/// is empty. Out-requests with a caller container fill it and also appear in the bundle.
template <typename T, std::size_t NumOut>
class ResultBundle {
public:
    using Extra = std::pair<ParamKind, std::vector<int>>;

    ResultBundle() = default;
    ResultBundle(std::vector<T> payload, std::array<Extra, NumOut> extras)
        : payload_(std::move(payload)),
          extras_(std::move(extras)) {}

    std::vector<T> extract_recv_buf() {
        if (payload_taken_) {
            throw UsageError("recv_buf already extracted from this result");
        }
        payload_taken_ = true;
        return std::move(payload_);
    }

    std::vector<int> extract_recv_counts() {
        return extract(ParamKind::recv_counts);
    }
    std::vector<int> extract_recv_displs() {
        return extract(ParamKind::recv_displs);
    }
    std::vector<int> extract_send_counts() {
        return extract(ParamKind::send_counts);
    }
    std::vector<int> extract_send_displs() {
        return extract(ParamKind::send_displs);
    }

    /// Kinds of the out-requests, in call order.
    std::array<ParamKind, NumOut> out_kinds() const {
        std::array<ParamKind, NumOut> kinds{};
        for (std::size_t i = 0; i < NumOut; ++i) {
            kinds[i] = extras_[i].first;
        }
        return kinds;
    }

    template <std::size_t I>
    auto get() && {
        if constexpr (I == 0) {
            return std::move(payload_);
        } else {
            return std::move(extras_[I - 1].second);
        }
    }

    /// A bundle without out-requests converts to its payload.
    operator std::vector<T>() &&
        requires(NumOut == 0)
    {
        return std::move(payload_);
    }

private:
    std::vector<int> extract(ParamKind kind) {
        for (std::size_t i = 0; i < NumOut; ++i) {
            if (extras_[i].first == kind) {
                if (taken_[i]) {
                    throw UsageError(std::string(to_string(kind)) + " already extracted from this result");
                }
                taken_[i] = true;
                return std::move(extras_[i].second);
            }
        }
        throw UsageError(std::string(to_string(kind)) + " was not requested as an out-parameter");
    }

    std::vector<T>             payload_;
    std::array<Extra, NumOut>  extras_{};
    std::array<bool, NumOut>   taken_{};
    bool                       payload_taken_ = false;
};

} // namespace xcomm

template <typename T, std::size_t N>
struct std::tuple_size<xcomm::ResultBundle<T, N>> : std::integral_constant<std::size_t, N + 1> {};

template <typename T, std::size_t N>
struct std::tuple_element<0, xcomm::ResultBundle<T, N>> {
    using type = std::vector<T>;
};

template <std::size_t I, typename T, std::size_t N>
    requires(I > 0 && I <= N)
struct std::tuple_element<I, xcomm::ResultBundle<T, N>> {
    using type = std::vector<int>;
};
