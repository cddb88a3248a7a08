#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clir {

inline constexpr const char* kVersion = "0.1.0";

/// Malformed or inconsistent input data. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A remote dependency (chat endpoint, scorer service) failed. Exit code 3.
struct ExternalServiceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ranked retrieval result row.
struct SearchHit {
    std::string docid;
    double score = 0.0;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Deterministic PRNG used wherever randomness is needed. Hand-rolled (splitmix64
/// stream) so sequences are identical across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [0, n). n must be nonzero.
    size_t next_index(size_t n) { return size_t(next_u64() % n); }

  private:
    uint64_t state_;
};

// ---------------------------------------------------------------------------
// Number formatting / parsing
// ---------------------------------------------------------------------------

/// Shortest decimal string that round-trips the exact double value.
inline std::string dtos(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw DataError(context + ": bad number '" + std::string(s) + "'");
    return v;
}

inline long long parse_ll(std::string_view s, const std::string& context) {
    long long v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw DataError(context + ": bad integer '" + std::string(s) + "'");
    return v;
}

// ---------------------------------------------------------------------------
// Little-endian binary encoding (persisted index files are little-endian by
// contract, independent of host byte order)
// ---------------------------------------------------------------------------

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
}

inline void put_f32(std::vector<uint8_t>& out, float f) {
    uint32_t v;
    static_assert(sizeof(v) == sizeof(f));
    __builtin_memcpy(&v, &f, 4);
    put_u32(out, v);
}

/// Unsigned LEB128.
inline void put_varint(std::vector<uint8_t>& out, uint64_t v) {
    while (v >= 0x80) {
        out.push_back(uint8_t(v) | 0x80);
        v >>= 7;
    }
    out.push_back(uint8_t(v));
}

class ByteReader {
  public:
    ByteReader(const uint8_t* data, size_t size, std::string name)
        : p_(data), end_(data + size), name_(std::move(name)) {}

    uint32_t get_u32() {
        need(4);
        uint32_t v = uint32_t(p_[0]) | uint32_t(p_[1]) << 8 | uint32_t(p_[2]) << 16 |
                     uint32_t(p_[3]) << 24;
        p_ += 4;
        return v;
    }

    float get_f32() {
        uint32_t v = get_u32();
        float f;
        __builtin_memcpy(&f, &v, 4);
        return f;
    }

    uint64_t get_varint() {
        uint64_t v = 0;
        int shift = 0;
        for (;;) {
            need(1);
            uint8_t b = *p_++;
            v |= uint64_t(b & 0x7f) << shift;
            if (!(b & 0x80)) return v;
            shift += 7;
            if (shift >= 64) throw DataError(name_ + ": varint too long");
        }
    }

    bool done() const { return p_ == end_; }
    size_t remaining() const { return size_t(end_ - p_); }

  private:
    void need(size_t n) {
        if (remaining() < n) throw DataError(name_ + ": truncated");
    }
    const uint8_t* p_;
    const uint8_t* end_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw DataError("write failed: " + path.string());
}

inline void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace clir
