// common.hpp — error type, deterministic RNG, seed derivation, small utilities.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace texlet {

// Thrown for all hard errors (bad input, format violations, shape mismatches).
class TexletError : public std::runtime_error {
public:
    explicit TexletError(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw TexletError(msg); }

inline void require(bool ok, const std::string& msg) {
    if (!ok) fail(msg);
}

// splitmix64: tiny, well-mixed, identical on every platform. Used everywhere
// instead of <random> engines/distributions so outputs are bit-reproducible.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t v) {
    uint64_t s = seed ^ (v + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2));
    return splitmix64(s);
}

inline uint64_t hash_string(std::string_view s) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Derives an independent stream seed for a named subsystem from the root seed.
inline uint64_t subsystem_seed(uint64_t root, std::string_view name) {
    return hash_combine(root, hash_string(name));
}

// Deterministic RNG. normal() uses Box-Muller on splitmix64 uniforms, so the
// sequence does not depend on any libc distribution implementation.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in (0,1]; never returns 0 so log() is safe
    double uniform() {
        return (double)((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // uniform in [0,1)
    double uniform_co() {
        return (double)(next_u64() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform_co();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // normal truncated to [-2, 2] by redraw
    double truncated_normal() {
        for (;;) {
            double z = normal();
            if (z >= -2.0 && z <= 2.0) return z;
        }
    }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace texlet
