#pragma once

// Little-endian binary helpers for snapshot and index files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lcsynth/errors.hpp"

namespace lcsynth::binio {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_str(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void need(std::istream& in, const char* what) {
    if (!in) throw IoError(std::string("truncated or unreadable file while reading ") + what);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    need(in, "u64");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    need(in, "u32");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
inline float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

inline std::string get_str(std::istream& in, std::uint64_t max_len = 1u << 30) {
    const std::uint64_t n = get_u64(in);
    if (n > max_len) throw IoError("string field too long in binary file");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    need(in, "string");
    return s;
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& what) {
    char b[8];
    in.read(b, 8);
    if (!in || std::memcmp(b, magic, 8) != 0) throw IoError("not a " + what + " file (bad magic)");
}

}  // namespace lcsynth::binio
