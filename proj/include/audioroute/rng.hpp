#pragma once

#include <cstdint>
#include <string_view>

namespace audioroute {

// splitmix64. Fixed constants, so derived streams are identical on every
// platform and at every worker count.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    return splitmix64(s);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-based generator; uniform() yields 53-bit doubles in [0,1).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

private:
    std::uint64_t state_;
};

// Named substream derivation. Streams are keyed by (seed, tag, indices), never
// by draw order elsewhere, which keeps parallel and serial runs identical.
inline RngStream derive_stream(std::uint64_t seed, std::string_view tag,
                               std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
    std::uint64_t s = mix64(seed, fnv1a64(tag));
    s = mix64(s, a);
    s = mix64(s, b);
    s = mix64(s, c);
    return RngStream(s);
}

// One uniform value from a precomputed hash, for pure-function outcome bits.
inline double unit_from_hash(std::uint64_t h) {
    std::uint64_t s = h;
    return static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
}

}  // namespace audioroute
