#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>

#include "hesslab/errors.hpp"

// Little-endian binary helpers shared by the checkpoint, parameter and
// dataset-cache formats.
namespace hesslab::binio {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf, 8);
}

inline void put_i64(std::ostream& os, std::int64_t v) { put_u64(os, static_cast<std::uint64_t>(v)); }

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_f64s(std::ostream& os, std::span<const double> xs) {
    for (double x : xs) put_f64(os, x);
}

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), static_cast<std::streamsize>(magic.size())); }

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char buf[8];
    const auto at = static_cast<std::size_t>(is.tellg());
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw ParseError("unexpected end of file", at);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

inline std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get_u64(is)); }

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void expect_magic(std::istream& is, std::string_view magic) {
    std::string buf(magic.size(), '\0');
    if (!is.read(buf.data(), static_cast<std::streamsize>(magic.size())) || buf != magic)
        throw ParseError("bad magic header, expected " + std::string(magic), 0);
}

// Guards against absurd lengths read from a corrupt header.
inline std::uint64_t get_count(std::istream& is, std::uint64_t limit = (1ULL << 32)) {
    const auto at = static_cast<std::size_t>(is.tellg());
    const std::uint64_t n = get_u64(is);
    if (n > limit) throw ParseError("implausible element count", at);
    return n;
}

}  // namespace hesslab::binio
