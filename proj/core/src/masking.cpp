#include "mtabgen/masking.hpp"

#include <numeric>

namespace mtabgen {

MaskSet MaskSet::make(BinaryMask cond, BinaryMask missing) {
    MaskSet ms;
    ms.eff = compose_eff(cond, missing);
    ms.cond = std::move(cond);
    ms.missing = std::move(missing);
    return ms;
}

BinaryMask mask_full(size_t n, size_t k) {
    require(n >= 1 && k >= 1, "mask_full: need n,k >= 1");
    return BinaryMask(n, k, 1);
}

BinaryMask mask_dynamic(size_t n, size_t k, Rng& rng) {
    require(k >= 1, "mask_dynamic: need k >= 1");
    BinaryMask mask(n, k, 0);
    std::vector<size_t> order(k);
    for (size_t r = 0; r < n; ++r) {
        const size_t c = 1 + static_cast<size_t>(rng.uniform_int(k));
        std::iota(order.begin(), order.end(), size_t{0});
        rng.shuffle(order);
        for (size_t i = 0; i < c; ++i) mask.set(r, order[i], 1);
    }
    return mask;
}

BinaryMask mask_from_missing(const BinaryMask& missing) { return missing; }

BinaryMask compose_eff(const BinaryMask& cond, const BinaryMask& missing) {
    require(cond.rows == missing.rows && cond.cols == missing.cols,
            "compose_eff: mask shape mismatch");
    BinaryMask eff(cond.rows, cond.cols, 0);
    for (size_t i = 0; i < eff.data.size(); ++i) {
        eff.data[i] = (cond.data[i] | missing.data[i]) ? 1 : 0;
    }
    return eff;
}

}  // namespace mtabgen
