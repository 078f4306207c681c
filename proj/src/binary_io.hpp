#pragma once

// Little-endian primitives shared by the TSDM and TSPS file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "trajsim/error.hpp"

namespace trajsim::binary {

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
            std::swap(b[i], b[sizeof(T) - 1 - i]);
        }
        std::memcpy(&v, b, sizeof(T));
    }
    return v;
}

template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::is_arithmetic_v<T>);
    v = byteswap_if_big(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
    static_assert(std::is_arithmetic_v<T>);
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw DataError(std::string("truncated file while reading ") + what);
    }
    return byteswap_if_big(v);
}

inline void put_doubles(std::ostream& out, const double* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            put(out, data[i]);
        }
    }
}

inline void get_doubles(std::istream& in, double* data, std::size_t count, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(double)))) {
            throw DataError(std::string("truncated file while reading ") + what);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            data[i] = get<double>(in, what);
        }
    }
}

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
    char buf[4];
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0) {
        throw DataError(std::string("bad magic: expected ") + magic);
    }
}

}  // namespace trajsim::binary
