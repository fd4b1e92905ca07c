#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "texr/types.hpp"

namespace texr {

// A feature archetype: a recurring semantic column pattern with a canonical
// type, range/categories, and a distribution tendency. Tendencies make
// context text predictive of values, the same regularity an LLM prior
// carries, so models can generalize across contexts that share archetypes.
struct Archetype {
    std::string name;
    std::string description; // base description, scenario text is appended
    bool continuous = true;
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::string> categories;
    double loc = 0.5;   // preferred mean, in normalized [0,1] units
    double scale = 0.15; // preferred stddev, normalized
    std::vector<double> base_pmf;
};

const std::vector<Archetype>& archetype_pool();
const Archetype* find_archetype(const std::string& name);

// High-level categories, sub-field names, and predictive scenarios used by
// the procedural text backend.
const std::vector<std::string>& category_pool();
const std::vector<std::string>& domain_word_pool();
const std::vector<std::string>& scenario_pool();

struct ContinuousTendency {
    double loc;
    double scale;
};

// Tendencies for arbitrary feature names; unknown names get smooth
// hash-derived defaults so any schema is coverable.
ContinuousTendency continuous_tendency(const std::string& feature_name);
std::vector<double> discrete_tendency(const std::string& feature_name, size_t n_categories);

// Signed dependence strength for a (child, parent) name pair, in [-1, 1].
// Stable across contexts: the same pair always tilts the same way.
double pair_tilt(const std::string& child_name, const std::string& parent_name);

// Normalized position of a parent's rendered value ("Q1".."Q4" for
// continuous, the category string otherwise), in [-1, 1].
double value_position(const std::string& parent_name, const std::string& rendered_value);

// Aggregate tilt of a full parent configuration on a child.
double config_tilt(const std::string& child_name,
                   const std::vector<std::pair<std::string, std::string>>& parent_values);

// Mass of N(loc, scale^2) in each quarter of [0, 1].
std::array<double, 4> quartile_probs_from_gaussian(double loc, double scale);

} // namespace texr
