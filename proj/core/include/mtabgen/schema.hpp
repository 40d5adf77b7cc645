#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mtabgen/common.hpp"

namespace mtabgen {

enum class ColumnKind { numerical, categorical };
enum class ColumnRole { feature, target };

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::numerical;
    size_t class_count = 0;  // categorical only
    ColumnRole role = ColumnRole::feature;
};

struct TableSchema {
    std::vector<ColumnSpec> columns;

    // Unique names, exactly one target, class_count >= 2 for categoricals.
    void validate() const;

    size_t target_index() const;
    const ColumnSpec& target() const { return columns[target_index()]; }
    std::optional<size_t> column_index(const std::string& name) const;

    // Feature columns (everything except the target) in schema order; the
    // position in this list is the feature index used by masks and encoders.
    std::vector<size_t> feature_columns() const;
    size_t feature_count() const { return feature_columns().size(); }
    size_t numeric_feature_count() const;
    size_t categorical_feature_count() const;
};

// Precomputed schema lookups shared by the encoder, trainer and sampler.
struct SchemaIndex {
    std::vector<size_t> feature_cols;          // feature slot -> column index
    std::vector<size_t> numeric_cols;          // numeric slot -> column index
    std::vector<size_t> categorical_cols;      // categorical slot -> column index
    std::vector<int> feature_slot_of_col;      // column -> feature slot or -1
    std::vector<int> numeric_slot_of_feature;  // feature slot -> numeric slot or -1
    std::vector<int> cat_slot_of_feature;      // feature slot -> categorical slot or -1
    size_t target_col = 0;

    explicit SchemaIndex(const TableSchema& schema);
    size_t k() const { return feature_cols.size(); }
    size_t k_num() const { return numeric_cols.size(); }
    size_t k_cat() const { return categorical_cols.size(); }
};

// One CSV cell. `text` is the original token (kept verbatim so pass-through
// cells can be rewritten byte-identically); `number` is the parsed value for
// numerical columns.
struct Cell {
    bool missing = false;
    double number = 0.0;
    std::string text;

    static Cell make_missing() { return Cell{true, 0.0, {}}; }
    static Cell of_number(double v) { return Cell{false, v, {}}; }
    static Cell of_text(std::string t) { return Cell{false, 0.0, std::move(t)}; }
};

struct RawTable {
    TableSchema schema;
    std::vector<std::vector<Cell>> rows;

    size_t row_count() const { return rows.size(); }
};

// Numerical iff every non-missing token parses as a finite number and the
// distinct token count exceeds `cardinality_threshold`; otherwise categorical
// with class_count = distinct non-missing tokens. Last column becomes the
// target.
TableSchema infer_schema(const RawTable& raw, size_t cardinality_threshold = 20);

std::string schema_to_json(const TableSchema& schema);
TableSchema schema_from_json(const std::string& json_text);
TableSchema load_schema_file(const std::string& path);
void save_schema_file(const TableSchema& schema, const std::string& path);

}  // namespace mtabgen
