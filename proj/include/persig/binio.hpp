#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "persig/error.hpp"

namespace persig {

static_assert(std::endian::native == std::endian::little,
              "file and wire formats assume a little-endian host");

// ---------------------------------------------------------------------------
// Little-endian primitives over iostreams (native order on this platform),
// big-endian u32 for the MNIST IDX container, and a small streaming digest.
// ---------------------------------------------------------------------------

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw Error(Errc::io_failure, "write failed");
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw Error(Errc::truncated, "unexpected end of stream");
}

template <class T>
void write_le(std::ostream& os, T v) {
    write_bytes(os, &v, sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
    T v;
    read_bytes(is, &v, sizeof(T));
    return v;
}

inline void write_f32_array(std::ostream& os, const float* p, size_t n) {
    write_bytes(os, p, n * sizeof(float));
}

inline void read_f32_array(std::istream& is, float* p, size_t n) {
    read_bytes(is, p, n * sizeof(float));
}

inline uint32_t read_u32_be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

inline void write_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

inline void write_magic(std::ostream& os, const char (&magic)[9]) {
    write_bytes(os, magic, 8);
}

inline void expect_magic(std::istream& is, const char (&magic)[9], const std::string& what) {
    char buf[8];
    read_bytes(is, buf, 8);
    if (std::memcmp(buf, magic, 8) != 0)
        throw Error(Errc::bad_magic, "not a " + what + " file");
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

inline void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path + " for write");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error(Errc::io_failure, "write failed: " + path);
}

// FNV-1a 64, used for artifact digests in the manifest
inline uint64_t fnv1a64(const uint8_t* p, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t file_digest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(Errc::io_failure, "cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(reinterpret_cast<const uint8_t*>(buf), static_cast<size_t>(f.gcount()), h);
    }
    return h;
}

} // namespace persig
