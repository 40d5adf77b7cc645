#include "mtabgen/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace mtabgen {

double normal_quantile(double p) {
    require(p > 0.0 && p < 1.0, "normal_quantile: p must lie in (0,1)");
    const double q = p - 0.5;
    double r, num, den;
    if (std::fabs(q) <= 0.425) {
        r = 0.180625 - q * q;
        num = (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                    6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                  1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        den = (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                    3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                  5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                  3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                2.05319162663775882187e+0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return q < 0.0 ? -val : val;
}

NumericQuantileMap NumericQuantileMap::fit(std::vector<double> values,
                                           const std::string& column) {
    if (values.size() < 2) {
        throw DataError("fit: numerical column '" + column + "' needs >= 2 observed values");
    }
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) {
        throw DataError("fit: numerical column '" + column +
                        "' is constant (degenerate quantile map)");
    }
    NumericQuantileMap map;
    map.fit_values = values;
    const size_t n = values.size();
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[j + 1] == values[i]) ++j;
        // 1-based ranks i+1 .. j+1 share the mean rank
        const double mean_rank = 0.5 * static_cast<double>((i + 1) + (j + 1));
        map.knots_x.push_back(values[i]);
        map.knots_z.push_back(normal_quantile((mean_rank - 0.5) / static_cast<double>(n)));
        i = j + 1;
    }
    return map;
}

namespace {

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const size_t hi = static_cast<size_t>(it - xs.begin());
    const size_t lo = hi - 1;
    const double t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[lo] + t * (ys[hi] - ys[lo]);
}

}  // namespace

double NumericQuantileMap::encode(double x) const { return interp(knots_x, knots_z, x); }

double NumericQuantileMap::decode(double z) const { return interp(knots_z, knots_x, z); }

int Preprocessor::code_of(size_t column, const std::string& label) const {
    const auto& dict = labels[column];
    const auto it = std::lower_bound(dict.begin(), dict.end(), label);
    if (it == dict.end() || *it != label) return -1;
    return static_cast<int>(it - dict.begin());
}

const std::string& Preprocessor::label_of(size_t column, int code) const {
    const auto& dict = labels[column];
    if (code < 0 || static_cast<size_t>(code) >= dict.size()) {
        throw DataError("decode: code " + std::to_string(code) + " out of range for column '" +
                        schema.columns[column].name + "'");
    }
    return dict[static_cast<size_t>(code)];
}

Preprocessor fit_preprocessor(const RawTable& raw, const TableSchema& schema) {
    schema.validate();
    Preprocessor prep;
    prep.schema = schema;
    prep.numeric_maps.resize(schema.columns.size());
    prep.labels.resize(schema.columns.size());
    for (size_t c = 0; c < schema.columns.size(); ++c) {
        const ColumnSpec& spec = schema.columns[c];
        auto col_in_file = raw.schema.column_index(spec.name);
        if (!col_in_file.has_value()) {
            throw DataError("fit: column '" + spec.name + "' not present in data");
        }
        const size_t fc = *col_in_file;
        if (spec.kind == ColumnKind::numerical) {
            std::vector<double> vals;
            for (const auto& row : raw.rows) {
                if (!row[fc].missing) vals.push_back(row[fc].number);
            }
            prep.numeric_maps[c] = NumericQuantileMap::fit(std::move(vals), spec.name);
        } else {
            std::vector<std::string> dict;
            for (const auto& row : raw.rows) {
                if (!row[fc].missing) dict.push_back(row[fc].text);
            }
            std::sort(dict.begin(), dict.end());
            dict.erase(std::unique(dict.begin(), dict.end()), dict.end());
            if (dict.size() < 2) {
                throw DataError("fit: categorical column '" + spec.name +
                                "' has fewer than 2 observed categories");
            }
            if (spec.class_count != 0 && dict.size() > spec.class_count) {
                throw DataError("fit: categorical column '" + spec.name + "' has " +
                                std::to_string(dict.size()) + " categories, schema declares " +
                                std::to_string(spec.class_count));
            }
            prep.labels[c] = std::move(dict);
        }
    }
    // Dictionary sizes become the effective class counts.
    for (size_t c = 0; c < prep.schema.columns.size(); ++c) {
        if (prep.schema.columns[c].kind == ColumnKind::categorical) {
            prep.schema.columns[c].class_count = prep.labels[c].size();
        }
    }
    return prep;
}

EncodedTable encode(const Preprocessor& prep, const RawTable& raw) {
    const TableSchema& schema = prep.schema;
    const SchemaIndex idx(schema);
    const size_t n = raw.row_count();
    require(n >= 1, "encode: empty table");

    std::vector<size_t> file_col(schema.columns.size());
    for (size_t c = 0; c < schema.columns.size(); ++c) {
        auto fc = raw.schema.column_index(schema.columns[c].name);
        if (!fc.has_value()) {
            throw DataError("encode: column '" + schema.columns[c].name +
                            "' not present in data");
        }
        file_col[c] = *fc;
    }

    EncodedTable out;
    out.schema = schema;
    out.n_rows = n;
    if (idx.k_num() > 0) out.numeric = Tensor({n, idx.k_num()});
    out.cat_codes.assign(n * idx.k_cat(), kMissingCode);
    out.missing.assign(n * idx.k(), 0);
    const bool target_numeric = schema.target().kind == ColumnKind::numerical;
    if (target_numeric) {
        out.target_numeric.assign(n, 0.0);
    } else {
        out.target_codes.assign(n, kMissingCode);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (size_t r = 0; r < n; ++r) {
        for (size_t slot = 0; slot < idx.k(); ++slot) {
            const size_t col = idx.feature_cols[slot];
            const Cell& cell = raw.rows[r][file_col[col]];
            const ColumnSpec& spec = schema.columns[col];
            if (cell.missing) {
                out.missing[r * idx.k() + slot] = 1;
                if (spec.kind == ColumnKind::numerical) {
                    out.numeric.at2(r, static_cast<size_t>(idx.numeric_slot_of_feature[slot])) =
                        nan;
                }
                continue;
            }
            if (spec.kind == ColumnKind::numerical) {
                out.numeric.at2(r, static_cast<size_t>(idx.numeric_slot_of_feature[slot])) =
                    prep.numeric_maps[col].encode(cell.number);
            } else {
                const int code = prep.code_of(col, cell.text);
                if (code < 0) {
                    throw DataError("encode: unseen category '" + cell.text + "' in column '" +
                                    spec.name + "'");
                }
                out.cat_codes[r * idx.k_cat() +
                              static_cast<size_t>(idx.cat_slot_of_feature[slot])] = code;
            }
        }
        const Cell& tcell = raw.rows[r][file_col[idx.target_col]];
        if (tcell.missing) {
            throw DataError("encode: missing target value at row " + std::to_string(r + 1) +
                            " (the target always conditions and cannot be missing)");
        }
        if (target_numeric) {
            out.target_numeric[r] = prep.numeric_maps[idx.target_col].encode(tcell.number);
        } else {
            const int code = prep.code_of(idx.target_col, tcell.text);
            if (code < 0) {
                throw DataError("encode: unseen category '" + tcell.text +
                                "' in target column");
            }
            out.target_codes[r] = code;
        }
    }
    return out;
}

RawTable decode(const Preprocessor& prep, const EncodedTable& enc) {
    const TableSchema& schema = prep.schema;
    const SchemaIndex idx(schema);
    RawTable out;
    out.schema = schema;
    out.rows.assign(enc.n_rows, std::vector<Cell>(schema.columns.size()));
    const bool target_numeric = schema.target().kind == ColumnKind::numerical;
    for (size_t r = 0; r < enc.n_rows; ++r) {
        for (size_t slot = 0; slot < idx.k(); ++slot) {
            const size_t col = idx.feature_cols[slot];
            Cell& cell = out.rows[r][col];
            if (enc.missing[r * idx.k() + slot]) {
                cell = Cell::make_missing();
                continue;
            }
            if (schema.columns[col].kind == ColumnKind::numerical) {
                const double z =
                    enc.numeric.at2(r, static_cast<size_t>(idx.numeric_slot_of_feature[slot]));
                if (!std::isfinite(z)) {
                    throw NumericError("decode: non-finite value at row " + std::to_string(r));
                }
                cell = Cell::of_number(prep.numeric_maps[col].decode(z));
            } else {
                const int code =
                    enc.cat_codes[r * idx.k_cat() +
                                  static_cast<size_t>(idx.cat_slot_of_feature[slot])];
                cell = Cell::of_text(prep.label_of(col, code));
            }
        }
        Cell& tcell = out.rows[r][idx.target_col];
        if (target_numeric) {
            const double z = enc.target_numeric[r];
            if (!std::isfinite(z)) {
                throw NumericError("decode: non-finite target at row " + std::to_string(r));
            }
            tcell = Cell::of_number(prep.numeric_maps[idx.target_col].decode(z));
        } else {
            tcell = Cell::of_text(prep.label_of(idx.target_col, enc.target_codes[r]));
        }
    }
    return out;
}

std::string preprocessor_to_json(const Preprocessor& prep) {
    nlohmann::json j;
    j["schema"] = nlohmann::json::parse(schema_to_json(prep.schema));
    nlohmann::json cols = nlohmann::json::object();
    for (size_t c = 0; c < prep.schema.columns.size(); ++c) {
        const ColumnSpec& spec = prep.schema.columns[c];
        nlohmann::json jc;
        if (spec.kind == ColumnKind::numerical) {
            jc["fit_values"] = prep.numeric_maps[c].fit_values;
        } else {
            jc["labels"] = prep.labels[c];
        }
        cols[spec.name] = jc;
    }
    j["columns"] = cols;
    return j.dump(2);
}

Preprocessor preprocessor_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("preprocessor JSON: ") + e.what());
    }
    Preprocessor prep;
    prep.schema = schema_from_json(j.at("schema").dump());
    prep.numeric_maps.resize(prep.schema.columns.size());
    prep.labels.resize(prep.schema.columns.size());
    for (size_t c = 0; c < prep.schema.columns.size(); ++c) {
        const ColumnSpec& spec = prep.schema.columns[c];
        const nlohmann::json& jc = j.at("columns").at(spec.name);
        if (spec.kind == ColumnKind::numerical) {
            std::vector<double> vals = jc.at("fit_values").get<std::vector<double>>();
            prep.numeric_maps[c] = NumericQuantileMap::fit(std::move(vals), spec.name);
        } else {
            prep.labels[c] = jc.at("labels").get<std::vector<std::string>>();
        }
    }
    return prep;
}

void save_preprocessor_file(const Preprocessor& prep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write preprocessor file: " + path);
    out << preprocessor_to_json(prep) << '\n';
}

Preprocessor load_preprocessor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open preprocessor file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return preprocessor_from_json(ss.str());
}

}  // namespace mtabgen
