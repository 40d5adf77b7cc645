#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mtabgen {

// Error taxonomy. The CLI maps these onto exit codes; library code throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct NumericError : Error {
    using Error::Error;
};
struct CheckpointError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

// Thread cap for internal parallelism, from TABDIFF_THREADS (>=1).
// With the current single-socket kernels everything is deterministic
// regardless of the cap; the cap only bounds worker counts.
int max_threads();

// FNV-1a 64-bit, used for checkpoint digests and RNG stream derivation.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over the pair; cheap and well mixed
    uint64_t x = a + 0x9e3779b97f4a7c15ULL + (b << 1 | b >> 63);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

}  // namespace mtabgen
