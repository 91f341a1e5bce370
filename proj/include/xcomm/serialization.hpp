#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcomm/datatypes.hpp"
#include "xcomm/errors.hpp"

namespace xcomm {

/// Archive format of a serialized payload. The first payload byte names the format so the receiver can
/// decode without being told.
enum class SerializationFormat : std::uint8_t { binary = 0x01, json = 0x02 };

/// Binary kind tags. Every value is written as its tag byte followed by the kind's layout:
///   bool      u8 (0 or 1)
///   signed    i64
///   unsigned  u64
///   float     f64
///   string    u64 length, raw bytes
///   sequence  u64 count, elements
///   mapping   u64 count, (key, value) pairs in container iteration order
///   pair      first, second
enum class BinaryKind : std::uint8_t {
    boolean  = 1,
    signed_  = 2,
    unsigned_ = 3,
    floating = 4,
    string   = 5,
    sequence = 6,
    mapping  = 7,
    pair     = 8,
};

/// Serializer<T> is specialized for every kind the binary archive knows. Unregistered kinds have no
/// specialization and fail to compile at the call site.
template <typename T, typename = void>
struct Serializer;

template <typename T>
concept Serializable = requires(T const& value, Bytes& out, std::span<std::byte const>& in) {
    Serializer<T>::write(value, out);
    { Serializer<T>::read(in) } -> std::same_as<T>;
};

namespace detail {

inline void put_kind(Bytes& out, BinaryKind kind) {
    out.push_back(static_cast<std::byte>(kind));
}

template <typename T>
void put_raw(Bytes& out, T value) {
    auto const offset = out.size();
    out.resize(offset + sizeof(T));
    store_le(value, out.data() + offset);
}

inline void expect_kind(std::span<std::byte const>& in, BinaryKind kind) {
    if (in.empty()) {
        throw DecodeError("serialized payload truncated");
    }
    if (static_cast<BinaryKind>(in.front()) != kind) {
        throw DecodeError(
            "serialized payload has kind tag " + std::to_string(static_cast<int>(in.front())) + ", expected "
            + std::to_string(static_cast<int>(kind))
        );
    }
    in = in.subspan(1);
}

template <typename T>
T take_raw(std::span<std::byte const>& in) {
    if (in.size() < sizeof(T)) {
        throw DecodeError("serialized payload truncated");
    }
    T value = load_le<T>(in.data());
    in      = in.subspan(sizeof(T));
    return value;
}

inline std::size_t take_length(std::span<std::byte const>& in) {
    auto const length = take_raw<std::uint64_t>(in);
    if (length > in.size()) {
        // Every element occupies at least one byte, so a larger count cannot be genuine.
        throw DecodeError("serialized length " + std::to_string(length) + " exceeds remaining payload");
    }
    return static_cast<std::size_t>(length);
}

template <typename T>
struct is_mapping : std::false_type {};
template <typename K, typename V, typename C, typename A>
struct is_mapping<std::map<K, V, C, A>> : std::true_type {};
template <typename K, typename V, typename H, typename E, typename A>
struct is_mapping<std::unordered_map<K, V, H, E, A>> : std::true_type {};

} // namespace detail

template <>
struct Serializer<bool> {
    static void write(bool value, Bytes& out) {
        detail::put_kind(out, BinaryKind::boolean);
        detail::put_raw<std::uint8_t>(out, value ? 1 : 0);
    }
    static bool read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::boolean);
        auto const raw = detail::take_raw<std::uint8_t>(in);
        if (raw > 1) {
            throw DecodeError("boolean byte out of range");
        }
        return raw == 1;
    }
};

template <typename T>
struct Serializer<T, std::enable_if_t<std::is_integral_v<T> && !std::is_same_v<T, bool>>> {
    static constexpr BinaryKind kind = std::is_signed_v<T> ? BinaryKind::signed_ : BinaryKind::unsigned_;
    using Wide                       = std::conditional_t<std::is_signed_v<T>, std::int64_t, std::uint64_t>;

    static void write(T value, Bytes& out) {
        detail::put_kind(out, kind);
        detail::put_raw<Wide>(out, static_cast<Wide>(value));
    }
    static T read(std::span<std::byte const>& in) {
        detail::expect_kind(in, kind);
        auto const wide = detail::take_raw<Wide>(in);
        if (wide < static_cast<Wide>(std::numeric_limits<T>::min())
            || wide > static_cast<Wide>(std::numeric_limits<T>::max())) {
            throw DecodeError("serialized integer out of range for the target type");
        }
        return static_cast<T>(wide);
    }
};

template <typename T>
struct Serializer<T, std::enable_if_t<std::is_floating_point_v<T>>> {
    static void write(T value, Bytes& out) {
        detail::put_kind(out, BinaryKind::floating);
        detail::put_raw<double>(out, static_cast<double>(value));
    }
    static T read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::floating);
        return static_cast<T>(detail::take_raw<double>(in));
    }
};

template <>
struct Serializer<std::string> {
    static void write(std::string const& value, Bytes& out) {
        detail::put_kind(out, BinaryKind::string);
        detail::put_raw<std::uint64_t>(out, value.size());
        auto const* first = reinterpret_cast<std::byte const*>(value.data());
        out.insert(out.end(), first, first + value.size());
    }
    static std::string read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::string);
        auto const  length = detail::take_length(in);
        std::string value(reinterpret_cast<char const*>(in.data()), length);
        in = in.subspan(length);
        return value;
    }
};

template <typename T>
    requires Serializable<T>
struct Serializer<std::vector<T>> {
    static void write(std::vector<T> const& value, Bytes& out) {
        detail::put_kind(out, BinaryKind::sequence);
        detail::put_raw<std::uint64_t>(out, value.size());
        for (auto const& element: value) {
            Serializer<T>::write(element, out);
        }
    }
    static std::vector<T> read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::sequence);
        auto const     count = detail::take_length(in);
        std::vector<T> value;
        value.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            value.push_back(Serializer<T>::read(in));
        }
        return value;
    }
};

template <typename A, typename B>
    requires Serializable<A> && Serializable<B>
struct Serializer<std::pair<A, B>> {
    static void write(std::pair<A, B> const& value, Bytes& out) {
        detail::put_kind(out, BinaryKind::pair);
        Serializer<A>::write(value.first, out);
        Serializer<B>::write(value.second, out);
    }
    static std::pair<A, B> read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::pair);
        auto first = Serializer<A>::read(in);
        return {std::move(first), Serializer<B>::read(in)};
    }
};

template <typename Map>
    requires detail::is_mapping<Map>::value && Serializable<typename Map::key_type>
             && Serializable<typename Map::mapped_type>
struct Serializer<Map> {
    using Key   = typename Map::key_type;
    using Value = typename Map::mapped_type;

    static void write(Map const& value, Bytes& out) {
        detail::put_kind(out, BinaryKind::mapping);
        detail::put_raw<std::uint64_t>(out, value.size());
        for (auto const& [key, mapped]: value) {
            Serializer<Key>::write(key, out);
            Serializer<Value>::write(mapped, out);
        }
    }
    static Map read(std::span<std::byte const>& in) {
        detail::expect_kind(in, BinaryKind::mapping);
        auto const count = detail::take_length(in);
        Map        value;
        for (std::size_t i = 0; i < count; ++i) {
            auto key = Serializer<Key>::read(in);
            if (!value.emplace(std::move(key), Serializer<Value>::read(in)).second) {
                throw DecodeError("serialized mapping contains a duplicate key");
            }
        }
        return value;
    }
};

/// Serializes `value` into a self-describing payload (format byte first).
template <Serializable T>
Bytes serialize(T const& value, SerializationFormat format = SerializationFormat::binary) {
    Bytes out;
    out.push_back(static_cast<std::byte>(format));
    if (format == SerializationFormat::binary) {
        Serializer<T>::write(value, out);
    } else {
        auto const text  = nlohmann::json(value).dump();
        auto const* first = reinterpret_cast<std::byte const*>(text.data());
        out.insert(out.end(), first, first + text.size());
    }
    return out;
}

template <Serializable T>
T deserialize(std::span<std::byte const> payload) {
    if (payload.empty()) {
        throw DecodeError("serialized payload is empty");
    }
    auto const tag  = static_cast<std::uint8_t>(payload.front());
    auto       body = payload.subspan(1);
    if (tag == static_cast<std::uint8_t>(SerializationFormat::binary)) {
        T value = Serializer<T>::read(body);
        if (!body.empty()) {
            throw DecodeError("serialized payload has " + std::to_string(body.size()) + " trailing bytes");
        }
        return value;
    }
    if (tag == static_cast<std::uint8_t>(SerializationFormat::json)) {
        try {
            auto const* first = reinterpret_cast<char const*>(body.data());
            return nlohmann::json::parse(first, first + body.size()).template get<T>();
        } catch (nlohmann::json::exception const& e) {
            throw DecodeError(std::string("malformed json payload: ") + e.what());
        }
    }
    throw DecodeError("unknown serialization format tag " + std::to_string(tag));
}

/// Send-side adapter: marks a value for explicit serialization. References an lvalue (writable when the
/// lvalue is non-const, so a broadcast can deliver into it) or owns an rvalue.
template <Serializable T>
class SerializedValue {
public:
    SerializedValue(T& value, SerializationFormat format) : storage_(&value), format_(format) {}
    SerializedValue(T const& value, SerializationFormat format) : storage_(&value), format_(format) {}
    SerializedValue(T&& value, SerializationFormat format) : storage_(std::move(value)), format_(format) {}

    T const& value() const {
        if (auto const* ref = std::get_if<T*>(&storage_)) {
            return **ref;
        }
        if (auto const* ref = std::get_if<T const*>(&storage_)) {
            return **ref;
        }
        return std::get<T>(storage_);
    }
    SerializationFormat format() const noexcept {
        return format_;
    }
    Bytes bytes() const {
        return serialize(value(), format_);
    }
    /// Replaces the value; writes through to the referenced object when it is writable.
    void assign(T value) {
        if (auto* ref = std::get_if<T*>(&storage_)) {
            **ref = std::move(value);
        } else if (std::holds_alternative<T const*>(storage_)) {
            storage_ = std::move(value);
        } else {
            std::get<T>(storage_) = std::move(value);
        }
    }
    /// Releases the owned value (a copy when the adapter only references one).
    T extract() && {
        if (auto* owned = std::get_if<T>(&storage_)) {
            return std::move(*owned);
        }
        return value();
    }

private:
    std::variant<T*, T const*, T> storage_;
    SerializationFormat           format_;
};

template <typename T>
auto as_serialized(T&& value, SerializationFormat format = SerializationFormat::binary) {
    using Value = std::remove_cvref_t<T>;
    static_assert(Serializable<Value>, "as_serialized: this kind is not registered with the serializer");
    return SerializedValue<Value>(std::forward<T>(value), format);
}

/// Receive-side adapter: names the kind to reconstruct.
template <Serializable T>
struct Deserializable {
    T decode(std::span<std::byte const> payload) const {
        return deserialize<T>(payload);
    }
};

template <typename T>
Deserializable<T> as_deserializable() {
    static_assert(Serializable<T>, "as_deserializable: this kind is not registered with the serializer");
    return {};
}

template <typename T>
struct is_serialized_value : std::false_type {};
template <typename T>
struct is_serialized_value<SerializedValue<T>> : std::true_type {};

} // namespace xcomm
