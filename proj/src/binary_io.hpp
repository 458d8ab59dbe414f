#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <type_traits>

namespace twinsplat::detail {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    out.write(bytes, sizeof(T));
}

/// Returns false when the stream ran out before sizeof(T) bytes.
template <typename T>
bool read_le(std::istream& in, T& value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    if (!in.read(bytes, sizeof(T))) return false;
    std::memcpy(&value, bytes, sizeof(T));
    return true;
}

} // namespace twinsplat::detail
