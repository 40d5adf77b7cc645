#include "mtabgen/schema.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mtabgen/csv.hpp"

namespace mtabgen {

namespace {

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

}  // namespace

void TableSchema::validate() const {
    require(!columns.empty(), "schema: no columns");
    std::unordered_set<std::string> seen;
    size_t targets = 0;
    for (const ColumnSpec& c : columns) {
        if (!seen.insert(c.name).second) {
            throw DataError("schema: duplicate column name '" + c.name + "'");
        }
        if (c.kind == ColumnKind::categorical && c.class_count < 2) {
            throw DataError("schema: categorical column '" + c.name +
                            "' needs class_count >= 2, got " + std::to_string(c.class_count));
        }
        if (c.role == ColumnRole::target) ++targets;
    }
    if (targets != 1) {
        throw DataError("schema: expected exactly one target column, found " +
                        std::to_string(targets));
    }
}

size_t TableSchema::target_index() const {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].role == ColumnRole::target) return i;
    }
    throw DataError("schema: no target column");
}

std::optional<size_t> TableSchema::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<size_t> TableSchema::feature_columns() const {
    std::vector<size_t> out;
    const size_t t = target_index();
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i != t) out.push_back(i);
    }
    return out;
}

size_t TableSchema::numeric_feature_count() const {
    size_t n = 0;
    for (size_t c : feature_columns()) {
        if (columns[c].kind == ColumnKind::numerical) ++n;
    }
    return n;
}

size_t TableSchema::categorical_feature_count() const {
    return feature_columns().size() - numeric_feature_count();
}

SchemaIndex::SchemaIndex(const TableSchema& schema) {
    target_col = schema.target_index();
    feature_cols = schema.feature_columns();
    feature_slot_of_col.assign(schema.columns.size(), -1);
    numeric_slot_of_feature.assign(feature_cols.size(), -1);
    cat_slot_of_feature.assign(feature_cols.size(), -1);
    for (size_t slot = 0; slot < feature_cols.size(); ++slot) {
        const size_t col = feature_cols[slot];
        feature_slot_of_col[col] = static_cast<int>(slot);
        if (schema.columns[col].kind == ColumnKind::numerical) {
            numeric_slot_of_feature[slot] = static_cast<int>(numeric_cols.size());
            numeric_cols.push_back(col);
        } else {
            cat_slot_of_feature[slot] = static_cast<int>(categorical_cols.size());
            categorical_cols.push_back(col);
        }
    }
}

TableSchema infer_schema(const RawTable& raw, size_t cardinality_threshold) {
    require(raw.row_count() >= 1, "infer_schema: empty table");
    const size_t n_cols = raw.schema.columns.size();
    TableSchema out;
    out.columns.resize(n_cols);
    for (size_t c = 0; c < n_cols; ++c) {
        ColumnSpec spec;
        spec.name = raw.schema.columns[c].name;
        std::set<std::string> distinct;
        bool all_numeric = true;
        size_t observed = 0;
        for (const auto& row : raw.rows) {
            const Cell& cell = row[c];
            if (cell.missing) continue;
            ++observed;
            const std::string token = cell.text.empty() ? format_double(cell.number) : cell.text;
            distinct.insert(token);
            double v;
            if (!parse_number(token, v)) all_numeric = false;
        }
        if (observed == 0) {
            throw DataError("infer_schema: column '" + spec.name + "' has no observed values");
        }
        if (all_numeric && distinct.size() > cardinality_threshold) {
            spec.kind = ColumnKind::numerical;
        } else {
            spec.kind = ColumnKind::categorical;
            spec.class_count = distinct.size();
        }
        spec.role = (c + 1 == n_cols) ? ColumnRole::target : ColumnRole::feature;
        out.columns[c] = spec;
    }
    return out;
}

std::string schema_to_json(const TableSchema& schema) {
    nlohmann::json cols = nlohmann::json::array();
    for (const ColumnSpec& c : schema.columns) {
        nlohmann::json jc;
        jc["name"] = c.name;
        jc["kind"] = c.kind == ColumnKind::numerical ? "numerical" : "categorical";
        if (c.kind == ColumnKind::categorical) jc["class_count"] = c.class_count;
        if (c.role == ColumnRole::target) jc["role"] = "target";
        cols.push_back(jc);
    }
    nlohmann::json j;
    j["columns"] = cols;
    return j.dump(2);
}

TableSchema schema_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("schema JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("columns") || !j["columns"].is_array()) {
        throw ConfigError("schema JSON: expected {\"columns\": [...]} ");
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() != "columns") {
            throw ConfigError("schema JSON: unknown key '" + it.key() + "'");
        }
    }
    TableSchema out;
    for (const auto& jc : j["columns"]) {
        ColumnSpec c;
        for (auto it = jc.begin(); it != jc.end(); ++it) {
            const std::string& k = it.key();
            if (k != "name" && k != "kind" && k != "class_count" && k != "role") {
                throw ConfigError("schema JSON: unknown column key '" + k + "'");
            }
        }
        c.name = jc.at("name").get<std::string>();
        const std::string kind = jc.at("kind").get<std::string>();
        if (kind == "numerical") {
            c.kind = ColumnKind::numerical;
        } else if (kind == "categorical") {
            c.kind = ColumnKind::categorical;
            c.class_count = jc.at("class_count").get<size_t>();
        } else {
            throw ConfigError("schema JSON: unknown kind '" + kind + "'");
        }
        if (jc.contains("role")) {
            const std::string role = jc.at("role").get<std::string>();
            if (role == "target") {
                c.role = ColumnRole::target;
            } else if (role == "feature") {
                c.role = ColumnRole::feature;
            } else {
                throw ConfigError("schema JSON: unknown role '" + role + "'");
            }
        }
        out.columns.push_back(std::move(c));
    }
    out.validate();
    return out;
}

TableSchema load_schema_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open schema file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return schema_from_json(ss.str());
}

void save_schema_file(const TableSchema& schema, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write schema file: " + path);
    out << schema_to_json(schema) << '\n';
}

}  // namespace mtabgen
