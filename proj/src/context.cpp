#include "texr/context.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "texr/errors.hpp"
#include "texr/hash.hpp"

namespace texr {

using nlohmann::json;

ValidationReport validate_context(const DatasetContext& ctx) {
    ValidationReport report;
    if (ctx.features.empty()) {
        report.push_back({"context", "context has no features"});
    }
    std::set<std::string> seen;
    for (const auto& f : ctx.features) {
        if (f.name.empty()) {
            report.push_back({f.name, "feature name is empty"});
        }
        if (!seen.insert(f.name).second) {
            report.push_back({f.name, "duplicate feature name"});
        }
        if (f.description.empty()) {
            report.push_back({f.name, "feature description is empty"});
        }
        if (const auto* c = std::get_if<ContinuousKind>(&f.kind)) {
            if (!std::isfinite(c->lo) || !std::isfinite(c->hi)) {
                report.push_back({f.name, "range bounds must be finite"});
            } else if (!(c->lo < c->hi)) {
                report.push_back({f.name, "inverted or empty range (lo must be < hi)"});
            }
        } else {
            const auto& d = std::get<DiscreteKind>(f.kind);
            if (d.categories.size() < 2) {
                report.push_back({f.name, "discrete feature needs at least 2 categories"});
            }
            std::set<std::string> cats;
            for (const auto& c : d.categories) {
                if (c.empty()) {
                    report.push_back({f.name, "empty category string"});
                }
                if (!cats.insert(c).second) {
                    report.push_back({f.name, "duplicate category '" + c + "'"});
                }
            }
        }
    }
    return report;
}

ValidationReport validate_table(const DatasetContext& ctx, const Table& table) {
    if (table.context_id != ctx.id) {
        throw ValidationError("validate_table: table bound to context '" + table.context_id +
                              "', not '" + ctx.id + "'");
    }
    ValidationReport report;
    const int d = static_cast<int>(ctx.features.size());
    for (size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (static_cast<int>(row.size()) != d) {
            report.push_back({"table",
                              "row has " + std::to_string(row.size()) + " entries, expected " +
                                  std::to_string(d),
                              static_cast<int>(r), -1});
            continue;
        }
        for (int c = 0; c < d; ++c) {
            const auto& spec = ctx.features[static_cast<size_t>(c)];
            const auto& val = row[static_cast<size_t>(c)];
            if (const auto* k = std::get_if<ContinuousKind>(&spec.kind)) {
                if (!std::holds_alternative<NumberValue>(val)) {
                    report.push_back({spec.name, "expected a number", static_cast<int>(r), c});
                    continue;
                }
                double v = number_of(val);
                if (!std::isfinite(v)) {
                    report.push_back({spec.name, "non-finite value", static_cast<int>(r), c});
                } else if (v < k->lo || v > k->hi) {
                    report.push_back({spec.name,
                                      "value " + format_double(v) + " outside [" +
                                          format_double(k->lo) + ", " + format_double(k->hi) + "]",
                                      static_cast<int>(r), c});
                }
            } else {
                const auto& dk = std::get<DiscreteKind>(spec.kind);
                if (!std::holds_alternative<CategoryValue>(val)) {
                    report.push_back({spec.name, "expected a category", static_cast<int>(r), c});
                    continue;
                }
                const auto& cat = category_of(val);
                if (std::find(dk.categories.begin(), dk.categories.end(), cat) ==
                    dk.categories.end()) {
                    report.push_back(
                        {spec.name, "category '" + cat + "' not in domain", static_cast<int>(r), c});
                }
            }
        }
    }
    return report;
}

namespace {

json feature_to_json(const FeatureSpec& f) {
    json j;
    j["name"] = f.name;
    j["description"] = f.description;
    if (const auto* c = std::get_if<ContinuousKind>(&f.kind)) {
        j["type"] = "continuous";
        j["range"] = json::array({c->lo, c->hi});
    } else {
        j["type"] = "discrete";
        j["categories"] = std::get<DiscreteKind>(f.kind).categories;
    }
    return j;
}

json context_body(const DatasetContext& ctx) {
    json j;
    j["description"] = ctx.description;
    j["domain"] = ctx.domain;
    j["topic"] = ctx.topic;
    j["features"] = json::array();
    for (const auto& f : ctx.features) {
        j["features"].push_back(feature_to_json(f));
    }
    return j;
}

FeatureSpec feature_from_json(const json& j, size_t index) {
    auto fail = [index](const std::string& why) {
        throw ValidationError("features[" + std::to_string(index) + "]: " + why);
    };
    if (!j.is_object()) fail("not an object");
    if (!j.contains("name") || !j["name"].is_string()) fail("missing 'name'");
    if (!j.contains("description") || !j["description"].is_string()) fail("missing 'description'");
    if (!j.contains("type") || !j["type"].is_string()) fail("missing 'type'");

    FeatureSpec f;
    f.name = j["name"].get<std::string>();
    f.description = j["description"].get<std::string>();
    const std::string type = j["type"].get<std::string>();
    if (type == "continuous") {
        if (!j.contains("range") || !j["range"].is_array() || j["range"].size() != 2 ||
            !j["range"][0].is_number() || !j["range"][1].is_number()) {
            fail("continuous feature needs a numeric 'range' of two values");
        }
        f.kind = ContinuousKind{j["range"][0].get<double>(), j["range"][1].get<double>()};
    } else if (type == "discrete") {
        if (!j.contains("categories") || !j["categories"].is_array()) {
            fail("discrete feature needs a 'categories' array");
        }
        DiscreteKind d;
        for (const auto& c : j["categories"]) {
            if (!c.is_string()) fail("categories must be strings");
            d.categories.push_back(c.get<std::string>());
        }
        f.kind = std::move(d);
    } else {
        fail("unknown type '" + type + "'");
    }
    return f;
}

} // namespace

json context_to_json(const DatasetContext& ctx) {
    json j = context_body(ctx);
    j["id"] = ctx.id;
    return j;
}

std::string serialize_context(const DatasetContext& ctx) {
    return context_to_json(ctx).dump(2) + "\n";
}

DatasetContext context_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("context: top level is not an object");
    if (!j.contains("description") || !j["description"].is_string()) {
        throw ValidationError("context: missing 'description'");
    }
    if (!j.contains("features") || !j["features"].is_array()) {
        throw ValidationError("context: missing 'features' array");
    }
    DatasetContext ctx;
    ctx.description = j["description"].get<std::string>();
    if (j.contains("domain") && j["domain"].is_string()) ctx.domain = j["domain"].get<std::string>();
    if (j.contains("topic") && j["topic"].is_string()) ctx.topic = j["topic"].get<std::string>();
    for (size_t i = 0; i < j["features"].size(); ++i) {
        ctx.features.push_back(feature_from_json(j["features"][i], i));
    }
    if (j.contains("id") && j["id"].is_string() && !j["id"].get<std::string>().empty()) {
        ctx.id = j["id"].get<std::string>();
    } else {
        ctx.id = make_context_id(ctx);
    }
    return ctx;
}

DatasetContext parse_context(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError("context parse error at byte " + std::to_string(e.byte) + ": " +
                              e.what());
    }
    return context_from_json(j);
}

std::string canonical_context_json(const DatasetContext& ctx) {
    return context_body(ctx).dump();
}

std::string context_content_hash(const DatasetContext& ctx) {
    return sha256_hex(canonical_context_json(ctx));
}

std::string slugify(const std::string& text, size_t max_len) {
    std::string out;
    for (char ch : text) {
        if (out.size() >= max_len) break;
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "ctx" : out;
}

std::string make_context_id(const DatasetContext& ctx) {
    const std::string base = !ctx.topic.empty() ? ctx.topic : ctx.description;
    return slugify(base) + "-" + context_content_hash(ctx).substr(0, 12);
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError("not a number: '" + s + "'");
    }
    return v;
}

namespace {

std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

Value cell_to_value(const DatasetContext& ctx, size_t col, const std::string& cell) {
    if (is_continuous(ctx.features[col].kind)) {
        return NumberValue{parse_double(cell)};
    }
    return CategoryValue{cell};
}

std::string value_to_cell(const Value& v) {
    if (const auto* n = std::get_if<NumberValue>(&v)) return format_double(n->v);
    return category_of(v);
}

} // namespace

std::string table_to_csv(const DatasetContext& ctx, const Table& table) {
    std::string out;
    for (size_t i = 0; i < ctx.features.size(); ++i) {
        if (i) out.push_back(',');
        out += csv_escape(ctx.features[i].name);
    }
    out.push_back('\n');
    for (const auto& row : table.rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(',');
            out += csv_escape(value_to_cell(row[i]));
        }
        out.push_back('\n');
    }
    return out;
}

Table table_from_csv(const DatasetContext& ctx, const std::string& text) {
    Table table;
    table.context_id = ctx.id;
    std::istringstream in(text);
    std::string line;
    bool header = true;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = csv_split(line);
        if (header) {
            if (cells.size() != ctx.features.size()) {
                throw ValidationError("csv header has " + std::to_string(cells.size()) +
                                      " columns, context has " +
                                      std::to_string(ctx.features.size()));
            }
            for (size_t i = 0; i < cells.size(); ++i) {
                if (cells[i] != ctx.features[i].name) {
                    throw ValidationError("csv header column " + std::to_string(i) + " is '" +
                                          cells[i] + "', expected '" + ctx.features[i].name + "'");
                }
            }
            header = false;
            continue;
        }
        if (cells.size() != ctx.features.size()) {
            throw ValidationError("csv line " + std::to_string(lineno) + ": wrong column count");
        }
        Row row;
        row.reserve(cells.size());
        for (size_t i = 0; i < cells.size(); ++i) {
            row.push_back(cell_to_value(ctx, i, cells[i]));
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string table_to_jsonl(const DatasetContext& ctx, const Table& table) {
    std::string out;
    for (const auto& row : table.rows) {
        json arr = json::array();
        for (size_t i = 0; i < row.size(); ++i) {
            if (const auto* n = std::get_if<NumberValue>(&row[i])) {
                arr.push_back(n->v);
            } else {
                arr.push_back(category_of(row[i]));
            }
        }
        (void)ctx;
        out += arr.dump();
        out.push_back('\n');
    }
    return out;
}

Table table_from_jsonl(const DatasetContext& ctx, const std::string& text) {
    Table table;
    table.context_id = ctx.id;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json arr;
        try {
            arr = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError("jsonl line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!arr.is_array() || arr.size() != ctx.features.size()) {
            throw ValidationError("jsonl line " + std::to_string(lineno) + ": wrong arity");
        }
        Row row;
        for (size_t i = 0; i < arr.size(); ++i) {
            if (is_continuous(ctx.features[i].kind)) {
                if (!arr[i].is_number()) {
                    throw ValidationError("jsonl line " + std::to_string(lineno) + " col " +
                                          std::to_string(i) + ": expected number");
                }
                row.push_back(NumberValue{arr[i].get<double>()});
            } else {
                if (!arr[i].is_string()) {
                    throw ValidationError("jsonl line " + std::to_string(lineno) + " col " +
                                          std::to_string(i) + ": expected string");
                }
                row.push_back(CategoryValue{arr[i].get<std::string>()});
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot open for writing: " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IntegrityError("write failed: " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IntegrityError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace texr
