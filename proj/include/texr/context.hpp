#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "texr/types.hpp"

namespace texr {

// Every invariant violation, or empty when the context is valid.
ValidationReport validate_context(const DatasetContext& ctx);

// Row/column violations with coordinates. Throws ValidationError when the
// table is bound to a different context id (caller bug, not a report entry).
ValidationReport validate_table(const DatasetContext& ctx, const Table& table);

// JSON in the dataset-specification shape: description plus a features array
// with name/type/description and range or categories. Extra keys carry the
// id/domain/topic so the round trip is the identity.
nlohmann::json context_to_json(const DatasetContext& ctx);
std::string serialize_context(const DatasetContext& ctx);

// Parses UTF-8 JSON text. Throws ValidationError with a position or feature
// index on malformed input; the result is not checked against the context
// invariants (callers run validate_context when they need the guarantee).
DatasetContext parse_context(const std::string& text);
DatasetContext context_from_json(const nlohmann::json& j);

// Canonical serialization excludes the id (the id derives from it).
std::string canonical_context_json(const DatasetContext& ctx);
std::string context_content_hash(const DatasetContext& ctx);

// Content-addressed id: slug of the topic/description plus a hash prefix.
std::string make_context_id(const DatasetContext& ctx);
std::string slugify(const std::string& text, size_t max_len = 32);

// Deterministic shortest round-trip formatting for doubles.
std::string format_double(double v);
double parse_double(const std::string& s);

// Table files. CSV: header = feature names, RFC4180-quoted cells.
// JSONL: one JSON array per line. The context supplies column types.
std::string table_to_csv(const DatasetContext& ctx, const Table& table);
Table table_from_csv(const DatasetContext& ctx, const std::string& text);
std::string table_to_jsonl(const DatasetContext& ctx, const Table& table);
Table table_from_jsonl(const DatasetContext& ctx, const std::string& text);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

} // namespace texr
