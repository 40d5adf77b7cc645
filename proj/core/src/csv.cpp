#include "mtabgen/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtabgen {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    require(ec == std::errc{}, "format_double failed");
    return std::string(buf, ptr);
}

namespace {

bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

struct RawCsv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> records;  // unquoted tokens
};

// Record-oriented CSV reader; quoted fields may span lines, "" escapes a
// quote. Throws DataError with the 1-based record number on malformed input.
RawCsv split_csv(const std::string& content, const std::string& origin) {
    RawCsv out;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool field_quoted = false;
    size_t record_no = 1;

    auto end_field = [&]() {
        fields.push_back(field);
        field.clear();
        field_quoted = false;
    };
    auto end_record = [&]() {
        end_field();
        if (out.header.empty()) {
            out.header = fields;
        } else {
            if (fields.size() != out.header.size()) {
                throw DataError(origin + ": row " + std::to_string(record_no - 1) + " has " +
                                std::to_string(fields.size()) + " fields, expected " +
                                std::to_string(out.header.size()));
            }
            out.records.push_back(fields);
        }
        fields.clear();
        ++record_no;
    };

    const size_t n = content.size();
    size_t i = 0;
    bool any = false;
    while (i < n) {
        const char c = content[i];
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < n && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else {
            if (c == '"') {
                if (!field.empty()) {
                    throw DataError(origin + ": row " + std::to_string(record_no) +
                                    ": quote inside unquoted field");
                }
                in_quotes = true;
                field_quoted = true;
            } else if (c == ',') {
                end_field();
            } else if (c == '\n') {
                if (!field.empty() && field.back() == '\r') field.pop_back();
                end_record();
            } else {
                field.push_back(c);
            }
        }
        ++i;
    }
    if (in_quotes) {
        throw DataError(origin + ": row " + std::to_string(record_no) + ": unbalanced quotes");
    }
    if (any && !(fields.empty() && field.empty())) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        end_record();
    }
    (void)field_quoted;
    if (out.header.empty()) throw DataError(origin + ": missing header row");
    return out;
}

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

}  // namespace

RawTable parse_csv(const std::string& content, const std::optional<TableSchema>& schema,
                   const std::string& origin) {
    RawCsv csv = split_csv(content, origin);

    if (schema.has_value()) {
        schema->validate();
        for (const ColumnSpec& c : schema->columns) {
            bool found = false;
            for (const std::string& h : csv.header) {
                if (h == c.name) found = true;
            }
            if (!found) {
                throw DataError(origin + ": schema column '" + c.name + "' not found in header");
            }
        }
        if (schema->columns.size() != csv.header.size()) {
            throw DataError(origin + ": header has " + std::to_string(csv.header.size()) +
                            " columns, schema expects " +
                            std::to_string(schema->columns.size()));
        }
    }

    // Column order comes from the file header; the schema (when given) is
    // matched by name.
    std::vector<size_t> schema_of_col(csv.header.size());
    TableSchema table_schema;
    if (schema.has_value()) {
        for (size_t c = 0; c < csv.header.size(); ++c) {
            auto idx = schema->column_index(csv.header[c]);
            require(idx.has_value(), "internal: header column lookup");
            schema_of_col[c] = *idx;
            table_schema.columns.push_back(schema->columns[*idx]);
        }
    } else {
        for (const std::string& h : csv.header) {
            ColumnSpec c;
            c.name = h;
            c.kind = ColumnKind::categorical;  // provisional until inference
            table_schema.columns.push_back(c);
        }
    }

    RawTable out;
    out.schema = table_schema;
    out.rows.reserve(csv.records.size());
    for (size_t r = 0; r < csv.records.size(); ++r) {
        std::vector<Cell> row(csv.header.size());
        for (size_t c = 0; c < csv.header.size(); ++c) {
            const std::string& tok = csv.records[r][c];
            if (is_missing_token(tok)) {
                row[c] = Cell::make_missing();
                continue;
            }
            Cell cell;
            cell.text = tok;
            if (out.schema.columns[c].kind == ColumnKind::numerical) {
                if (!parse_number(tok, cell.number)) {
                    throw DataError(origin + ": row " + std::to_string(r + 1) + ", column '" +
                                    csv.header[c] + "': cannot parse '" + tok + "' as number");
                }
            }
            row[c] = std::move(cell);
        }
        out.rows.push_back(std::move(row));
    }
    require(out.row_count() >= 1, origin + ": no data rows");

    if (!schema.has_value()) {
        TableSchema inferred = infer_schema(out);
        inferred.validate();
        out.schema = inferred;
        // Re-type numeric cells under the inferred schema.
        for (size_t r = 0; r < out.rows.size(); ++r) {
            for (size_t c = 0; c < out.schema.columns.size(); ++c) {
                Cell& cell = out.rows[r][c];
                if (cell.missing) continue;
                if (out.schema.columns[c].kind == ColumnKind::numerical) {
                    if (!parse_number(cell.text, cell.number)) {
                        throw DataError(origin + ": row " + std::to_string(r + 1) +
                                        ": non-numeric value in inferred numerical column");
                    }
                }
            }
        }
    }
    return out;
}

RawTable load_csv(const std::string& path, const std::optional<TableSchema>& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), schema, path);
}

namespace {

std::string escape_field(const std::string& s) {
    bool needs_quotes = false;
    for (char c : s) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            needs_quotes = true;
            break;
        }
    }
    if (!needs_quotes) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

}  // namespace

std::string to_csv_text(const RawTable& table) {
    std::ostringstream os;
    for (size_t c = 0; c < table.schema.columns.size(); ++c) {
        if (c) os << ',';
        os << escape_field(table.schema.columns[c].name);
    }
    os << '\n';
    for (const auto& row : table.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c) os << ',';
            const Cell& cell = row[c];
            if (cell.missing) continue;
            if (!cell.text.empty()) {
                os << escape_field(cell.text);
            } else if (table.schema.columns[c].kind == ColumnKind::numerical) {
                os << format_double(cell.number);
            }
        }
        os << '\n';
    }
    return os.str();
}

void write_csv(const RawTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write data file: " + path);
    out << to_csv_text(table);
}

}  // namespace mtabgen
