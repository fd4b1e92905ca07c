#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "texr/text_backend.hpp"
#include "texr/types.hpp"

namespace texr {

struct Dag {
    std::vector<int> order;                  // feature indices in topological order
    std::vector<std::pair<int, int>> edges;  // (parent, child), forward in `order`

    // Parents of `node` in edge order.
    std::vector<int> parents_of(int node) const;
    bool operator==(const Dag&) const = default;
};

// Key into a CPT: one index per parent, in the node's parent order.
// Discrete parents contribute a category index, continuous parents a
// quartile index in {0,1,2,3} over the declared [lo, hi] range.
using ParentKey = std::vector<int>;

struct DiscretePmf {
    std::map<ParentKey, std::vector<double>> table;
    bool operator==(const DiscretePmf&) const = default;
};

struct GaussianParams {
    double mean = 0.0;
    double var = 1.0;
    bool operator==(const GaussianParams&) const = default;
};

struct GaussianPdf {
    std::map<ParentKey, GaussianParams> table;
    bool operator==(const GaussianPdf&) const = default;
};

struct QuartileMixture {
    std::map<ParentKey, std::array<double, 4>> table;
    bool operator==(const QuartileMixture&) const = default;
};

using Cpt = std::variant<DiscretePmf, GaussianPdf, QuartileMixture>;

struct BayesNetSpec {
    std::string context_id;
    Dag dag;
    std::vector<Cpt> cpts; // one per feature index
    bool operator==(const BayesNetSpec&) const = default;
};

// Number of parent-key states a parent feature contributes.
int parent_domain_size(const FeatureSpec& parent);

// Quartile of a value within [lo, hi], clamped to {0..3}.
int quartile_of(double value, double lo, double hi);

// All parent keys of a node, mixed-radix ascending (first parent most
// significant). A parentless node has the single empty key.
std::vector<ParentKey> enumerate_parent_keys(const DatasetContext& ctx,
                                             const std::vector<int>& parents);

// Keeps exactly the edges whose parent precedes the child in topo_order,
// dropping self-loops and duplicates, preserving input order.
Dag enforce_acyclic(const std::vector<int>& topo_order,
                    const std::vector<std::pair<int, int>>& raw_edges);

// Seeded forward edges over d nodes in positional order; shared by the
// procedural text backend and direct procedural construction.
std::vector<std::pair<int, int>> procedural_edges(int d, std::uint64_t seed, int parent_cap);

struct EdgeRejection {
    std::string parent;
    std::string child;
    std::string reason;
};

struct BnGenConfig {
    int parent_cap = 3;
    bool allow_procedural_fallback = true;
    ProceduralBackend::Params fallback_params{};
};

struct BnGenResult {
    BayesNetSpec bn;
    GenerationLog log;
    std::vector<EdgeRejection> rejected_edges;
};

// One edge-list query, then one CPT query per (node, parent config), all
// under the retry rule. Probability vectors with sums in [0.9, 1.1] are
// renormalized; anything else consumes a retry and eventually the
// procedural CPT fallback.
BnGenResult generate_bn(TextGenBackend& backend, const DatasetContext& ctx, std::uint64_t seed,
                        const BnGenConfig& cfg = {});

// Ancestral sampling in topological order. Gaussian draws clip into the
// declared range; quartile mixtures sample a quartile then uniform within
// it. (bn, n_rows, seed) fully determines the result.
Table sample_table(const BayesNetSpec& bn, const DatasetContext& ctx, size_t n_rows,
                   std::uint64_t seed);

// Exhaustive joint over all-discrete networks (state space <= 10^6),
// keyed by per-feature category indices. Throws ValidationError otherwise.
std::map<std::vector<int>, double> exact_joint(const BayesNetSpec& bn,
                                               const DatasetContext& ctx);

// Log-probability of one row under an all-discrete network.
double discrete_row_loglik(const BayesNetSpec& bn, const DatasetContext& ctx, const Row& row);

struct BnNoise {
    double pmf_concentration = 60.0; // Dirichlet sharpness around the tendency
    double mean_jitter = 0.04;       // stddev of the mean shift, normalized
    double scale_jitter = 0.15;      // lognormal sigma on the tendency scale
    int parent_cap = 3;
};

// Direct construction from archetype tendencies: DiscretePmf for discrete
// nodes, GaussianPdf for continuous ones. Used for ground-truth DGP pools.
BayesNetSpec procedural_bn(const DatasetContext& ctx, std::uint64_t seed,
                           const BnNoise& noise = {});

// Resamples every probability row p as Dirichlet(concentration * p);
// Gaussian entries get a mean shift of one concentration^-1/2 stddev scale.
BayesNetSpec perturb_cpts(const BayesNetSpec& bn, double concentration, std::uint64_t seed);

ValidationReport validate_bn(const BayesNetSpec& bn, const DatasetContext& ctx);

nlohmann::json bn_to_json(const BayesNetSpec& bn, const DatasetContext& ctx);
BayesNetSpec bn_from_json(const nlohmann::json& j, const DatasetContext& ctx);

} // namespace texr
