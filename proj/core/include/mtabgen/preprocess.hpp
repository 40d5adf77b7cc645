#pragma once

#include <string>
#include <vector>

#include "mtabgen/schema.hpp"
#include "mtabgen/tensor.hpp"

namespace mtabgen {

// Inverse standard-normal CDF (Wichura's PPND16), |error| ~ 1e-15.
double normal_quantile(double p);

// Monotone empirical map to standard-normal values: the r-th of n sorted fit
// values maps to Phi^{-1}((r-0.5)/n); ties share their mean rank. Unseen
// values are interpolated linearly between fitted points, values beyond the
// fitted range clip to the extreme ranks.
struct NumericQuantileMap {
    std::vector<double> fit_values;  // as fitted: sorted, duplicates kept
    std::vector<double> knots_x;     // unique sorted values
    std::vector<double> knots_z;     // normal-space image per knot

    static NumericQuantileMap fit(std::vector<double> values, const std::string& column);
    double encode(double x) const;
    double decode(double z) const;
};

struct Preprocessor {
    TableSchema schema;
    // Indexed by column; inactive entries are empty.
    std::vector<NumericQuantileMap> numeric_maps;
    std::vector<std::vector<std::string>> labels;  // code -> label, lexicographic

    int code_of(size_t column, const std::string& label) const;  // -1 if unseen
    const std::string& label_of(size_t column, int code) const;
};

// Cell-level sentinels stored where missing_mask = 1; never read downstream.
inline constexpr int kMissingCode = -1;

struct EncodedTable {
    TableSchema schema;
    size_t n_rows = 0;
    Tensor numeric;                    // n_rows x K_num (unset when K_num = 0)
    std::vector<int> cat_codes;        // n_rows x K_cat row-major
    std::vector<double> target_numeric;  // regression targets
    std::vector<int> target_codes;       // classification targets
    std::vector<uint8_t> missing;        // n_rows x K row-major, 1 = missing

    size_t k() const { return SchemaIndex(schema).k(); }
    bool is_missing(size_t row, size_t feature_slot, size_t k_total) const {
        return missing[row * k_total + feature_slot] != 0;
    }
    size_t missing_count() const {
        size_t n = 0;
        for (uint8_t m : missing) n += m;
        return n;
    }
};

Preprocessor fit_preprocessor(const RawTable& raw, const TableSchema& schema);
EncodedTable encode(const Preprocessor& prep, const RawTable& raw);
RawTable decode(const Preprocessor& prep, const EncodedTable& enc);

std::string preprocessor_to_json(const Preprocessor& prep);
Preprocessor preprocessor_from_json(const std::string& json_text);
void save_preprocessor_file(const Preprocessor& prep, const std::string& path);
Preprocessor load_preprocessor_file(const std::string& path);

}  // namespace mtabgen
