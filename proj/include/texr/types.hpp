#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace texr {

struct ContinuousKind {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const ContinuousKind&) const = default;
};

struct DiscreteKind {
    std::vector<std::string> categories;
    bool operator==(const DiscreteKind&) const = default;
};

using FeatureKind = std::variant<ContinuousKind, DiscreteKind>;

inline bool is_continuous(const FeatureKind& k) {
    return std::holds_alternative<ContinuousKind>(k);
}

struct FeatureSpec {
    std::string name;
    FeatureKind kind;
    std::string description;
    bool operator==(const FeatureSpec&) const = default;
};

// A semantic data context: the schema of a task without any rows.
struct DatasetContext {
    std::string id;
    std::string domain;
    std::string topic;
    std::string description;
    std::vector<FeatureSpec> features;
    bool operator==(const DatasetContext&) const = default;

    int feature_index(const std::string& name) const {
        for (size_t i = 0; i < features.size(); ++i) {
            if (features[i].name == name) return static_cast<int>(i);
        }
        return -1;
    }
};

struct NumberValue {
    double v = 0.0;
    bool operator==(const NumberValue&) const = default;
};

struct CategoryValue {
    std::string c;
    bool operator==(const CategoryValue&) const = default;
};

using Value = std::variant<NumberValue, CategoryValue>;

inline double number_of(const Value& v) { return std::get<NumberValue>(v).v; }
inline const std::string& category_of(const Value& v) { return std::get<CategoryValue>(v).c; }

using Row = std::vector<Value>;

// Instantiated rows, positionally aligned with the owning context's features.
struct Table {
    std::string context_id;
    std::vector<Row> rows;
    bool operator==(const Table&) const = default;

    size_t row_count() const { return rows.size(); }
};

struct Violation {
    std::string where;  // feature name or "context"/"table"
    std::string reason;
    int row = -1;
    int column = -1;
};

using ValidationReport = std::vector<Violation>;

} // namespace texr
