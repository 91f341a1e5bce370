#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <vector>

#include "xcomm/errors.hpp"
#include "xcomm/transport.hpp"

namespace xcomm {

/// Specialize for a plain record to make it sendable. `fields` lists the members in wire order:
///
///     template <>
///     struct codec_traits<Particle> {
///         static constexpr auto fields = std::make_tuple(&Particle::id, &Particle::mass);
///     };
///
/// Records travel field by field, packed, without padding bytes.
template <typename T>
struct codec_traits;

template <typename T>
struct Codec;

/// Types with a fixed number of bytes per element on the wire.
template <typename T>
concept FixedWidth = requires(T const& value, std::byte* out, std::byte const* in) {
    { Codec<T>::element_width } -> std::convertible_to<std::size_t>;
    Codec<T>::write(value, out);
    { Codec<T>::read(in) } -> std::same_as<T>;
};

namespace detail {

template <typename T>
void store_le(T value, std::byte* out) noexcept {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        std::memcpy(out, &value, sizeof(T));
    } else {
        std::byte raw[sizeof(T)];
        std::memcpy(raw, &value, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            out[i] = raw[sizeof(T) - 1 - i];
        }
    }
}

template <typename T>
T load_le(std::byte const* in) noexcept {
    T value;
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        std::memcpy(&value, in, sizeof(T));
    } else {
        std::byte raw[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            raw[i] = in[sizeof(T) - 1 - i];
        }
        std::memcpy(&value, raw, sizeof(T));
    }
    return value;
}

template <typename T>
concept RegisteredRecord = requires { codec_traits<T>::fields; };

template <typename Record, typename Member>
using member_type = std::remove_cvref_t<decltype(std::declval<Record const&>().*std::declval<Member>())>;

} // namespace detail

/// Little-endian codec for arithmetic values and enums.
template <typename T>
    requires(std::is_arithmetic_v<T> || std::is_enum_v<T>) && (!std::is_same_v<T, bool>)
struct Codec<T> {
    static constexpr std::size_t element_width = sizeof(T);

    static void write(T const& value, std::byte* out) noexcept {
        detail::store_le(value, out);
    }
    static T read(std::byte const* in) noexcept {
        return detail::load_le<T>(in);
    }
};

template <>
struct Codec<bool> {
    static constexpr std::size_t element_width = 1;

    static void write(bool value, std::byte* out) noexcept {
        *out = std::byte{value ? std::uint8_t{1} : std::uint8_t{0}};
    }
    static bool read(std::byte const* in) noexcept {
        return *in != std::byte{0};
    }
};

template <typename A, typename B>
    requires FixedWidth<A> && FixedWidth<B>
struct Codec<std::pair<A, B>> {
    static constexpr std::size_t element_width = Codec<A>::element_width + Codec<B>::element_width;

    static void write(std::pair<A, B> const& value, std::byte* out) noexcept {
        Codec<A>::write(value.first, out);
        Codec<B>::write(value.second, out + Codec<A>::element_width);
    }
    static std::pair<A, B> read(std::byte const* in) noexcept {
        return {Codec<A>::read(in), Codec<B>::read(in + Codec<A>::element_width)};
    }
};

/// Field-by-field codec for records registered through codec_traits.
template <detail::RegisteredRecord T>
struct Codec<T> {
    static_assert(std::is_default_constructible_v<T>, "registered records must be default constructible");

    static constexpr std::size_t element_width = std::apply(
        [](auto... members) { return (Codec<detail::member_type<T, decltype(members)>>::element_width + ... + 0); },
        codec_traits<T>::fields
    );

    static void write(T const& value, std::byte* out) noexcept {
        std::apply(
            [&](auto... members) {
                ((Codec<detail::member_type<T, decltype(members)>>::write(value.*members, out),
                  out += Codec<detail::member_type<T, decltype(members)>>::element_width),
                 ...);
            },
            codec_traits<T>::fields
        );
    }

    static T read(std::byte const* in) noexcept {
        T value{};
        std::apply(
            [&](auto... members) {
                ((value.*members = Codec<detail::member_type<T, decltype(members)>>::read(in),
                  in += Codec<detail::member_type<T, decltype(members)>>::element_width),
                 ...);
            },
            codec_traits<T>::fields
        );
        return value;
    }
};

/// Appends the encoding of `values` to `out`.
template <FixedWidth T>
void encode_into(std::span<T const> values, Bytes& out) {
    constexpr auto width  = Codec<T>::element_width;
    auto const     offset = out.size();
    out.resize(offset + width * values.size());
    std::byte* cursor = out.data() + offset;
    for (auto const& value: values) {
        Codec<T>::write(value, cursor);
        cursor += width;
    }
}

template <FixedWidth T>
Bytes encode(std::span<T const> values) {
    Bytes out;
    encode_into(values, out);
    return out;
}

template <FixedWidth T>
Bytes encode(std::vector<T> const& values) {
    return encode(std::span<T const>(values));
}

/// Decodes `bytes` into `out` starting at element index `offset`; `out` must be large enough.
template <FixedWidth T>
void decode_into(std::span<std::byte const> bytes, std::span<T> out) {
    constexpr auto width = Codec<T>::element_width;
    if (bytes.size() % width != 0) {
        throw DecodeError(
            "payload of " + std::to_string(bytes.size()) + " bytes is not a multiple of the element width "
            + std::to_string(width)
        );
    }
    auto const count = bytes.size() / width;
    if (count > out.size()) {
        throw DecodeError("payload holds more elements than the destination");
    }
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = Codec<T>::read(bytes.data() + i * width);
    }
}

template <FixedWidth T>
std::vector<T> decode(std::span<std::byte const> bytes) {
    constexpr auto width = Codec<T>::element_width;
    if (bytes.size() % width != 0) {
        throw DecodeError(
            "payload of " + std::to_string(bytes.size()) + " bytes is not a multiple of the element width "
            + std::to_string(width)
        );
    }
    std::vector<T> out(bytes.size() / width);
    decode_into<T>(bytes, out);
    return out;
}

} // namespace xcomm
