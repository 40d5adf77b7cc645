#pragma once

#include <optional>
#include <string>

#include "mtabgen/schema.hpp"

namespace mtabgen {

// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

// UTF-8, comma-delimited, double-quote escaped CSV with a mandatory header.
// Empty cells and the literal NA denote missing values. When `schema` is
// omitted the column types are inferred (see infer_schema).
RawTable load_csv(const std::string& path, const std::optional<TableSchema>& schema = {});
RawTable parse_csv(const std::string& content, const std::optional<TableSchema>& schema = {},
                   const std::string& origin = "<memory>");

void write_csv(const RawTable& table, const std::string& path);
std::string to_csv_text(const RawTable& table);

}  // namespace mtabgen
