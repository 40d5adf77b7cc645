#pragma once

#include <cstdint>
#include <vector>

#include "mtabgen/rng.hpp"

namespace mtabgen {

// Row-major N x K binary matrix.
struct BinaryMask {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<uint8_t> data;

    BinaryMask() = default;
    BinaryMask(size_t r, size_t c, uint8_t fill = 0) : rows(r), cols(c), data(r * c, fill) {}

    uint8_t at(size_t r, size_t c) const { return data[r * cols + c]; }
    void set(size_t r, size_t c, uint8_t v) { data[r * cols + c] = v; }
    size_t count() const {
        size_t n = 0;
        for (uint8_t v : data) n += v;
        return n;
    }
};

// Conditional mask (1 = feature runs through forward diffusion and is
// denoised), the observed-missingness mask, and their elementwise OR. The
// target column is not part of the K feature slots and always conditions.
struct MaskSet {
    BinaryMask cond;
    BinaryMask missing;
    BinaryMask eff;

    static MaskSet make(BinaryMask cond, BinaryMask missing);
};

// All-ones conditional mask (synthetic generation; every feature is noised).
BinaryMask mask_full(size_t n, size_t k);

// Per row: c ~ Uniform{1..K} features chosen uniformly without replacement.
BinaryMask mask_dynamic(size_t n, size_t k, Rng& rng);

// Imputation mask: a copy of the missing mask.
BinaryMask mask_from_missing(const BinaryMask& missing);

// Elementwise OR.
BinaryMask compose_eff(const BinaryMask& cond, const BinaryMask& missing);

}  // namespace mtabgen
