#include "texr/bayes_net.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "texr/archetypes.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

using nlohmann::json;

std::vector<int> Dag::parents_of(int node) const {
    std::vector<int> out;
    for (const auto& [p, c] : edges) {
        if (c == node) out.push_back(p);
    }
    return out;
}

int parent_domain_size(const FeatureSpec& parent) {
    if (const auto* d = std::get_if<DiscreteKind>(&parent.kind)) {
        return static_cast<int>(d->categories.size());
    }
    return 4; // quartiles
}

int quartile_of(double value, double lo, double hi) {
    double u = (value - lo) / (hi - lo);
    return std::clamp(static_cast<int>(u * 4.0), 0, 3);
}

std::vector<ParentKey> enumerate_parent_keys(const DatasetContext& ctx,
                                             const std::vector<int>& parents) {
    std::vector<int> radix;
    radix.reserve(parents.size());
    for (int p : parents) {
        radix.push_back(parent_domain_size(ctx.features[static_cast<size_t>(p)]));
    }
    std::vector<ParentKey> keys;
    ParentKey key(parents.size(), 0);
    for (;;) {
        keys.push_back(key);
        int pos = static_cast<int>(parents.size()) - 1;
        while (pos >= 0) {
            if (++key[static_cast<size_t>(pos)] < radix[static_cast<size_t>(pos)]) break;
            key[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return keys;
}

Dag enforce_acyclic(const std::vector<int>& topo_order,
                    const std::vector<std::pair<int, int>>& raw_edges) {
    const int d = static_cast<int>(topo_order.size());
    std::vector<int> position(static_cast<size_t>(d), -1);
    for (int i = 0; i < d; ++i) {
        int node = topo_order[static_cast<size_t>(i)];
        if (node < 0 || node >= d || position[static_cast<size_t>(node)] != -1) {
            throw ValidationError("enforce_acyclic: topo_order is not a permutation");
        }
        position[static_cast<size_t>(node)] = i;
    }
    Dag dag;
    dag.order = topo_order;
    std::set<std::pair<int, int>> seen;
    for (const auto& e : raw_edges) {
        if (e.first < 0 || e.first >= d || e.second < 0 || e.second >= d) continue;
        if (e.first == e.second) continue;
        if (position[static_cast<size_t>(e.first)] >= position[static_cast<size_t>(e.second)]) {
            continue; // back edge: would close a cycle
        }
        if (!seen.insert(e).second) continue;
        dag.edges.push_back(e);
    }
    return dag;
}

std::vector<std::pair<int, int>> procedural_edges(int d, std::uint64_t seed, int parent_cap) {
    Rng rng(mix_seed(seed, "edges"));
    std::vector<std::pair<int, int>> edges;
    const double parent_count_weights[3] = {0.30, 0.45, 0.25};
    for (int child = 1; child < d; ++child) {
        size_t want = rng.categorical(std::span<const double>(parent_count_weights, 3));
        want = std::min({want, static_cast<size_t>(child), static_cast<size_t>(parent_cap)});
        if (want == 0) continue;
        auto picks = rng.sample_indices(child, static_cast<int>(want));
        for (int p : picks) edges.emplace_back(p, child);
    }
    return edges;
}

namespace {

std::string render_parent_value(const FeatureSpec& parent, int key_index) {
    if (const auto* dk = std::get_if<DiscreteKind>(&parent.kind)) {
        return dk->categories[static_cast<size_t>(key_index)];
    }
    return "Q" + std::to_string(key_index + 1);
}

// {"parent_name": "value", ...}; key order is nlohmann's (alphabetical),
// which is stable.
std::string render_parent_config(const DatasetContext& ctx, const std::vector<int>& parents,
                                 const ParentKey& key) {
    json obj = json::object();
    for (size_t i = 0; i < parents.size(); ++i) {
        const auto& spec = ctx.features[static_cast<size_t>(parents[i])];
        obj[spec.name] = render_parent_value(spec, key[i]);
    }
    return obj.dump();
}

std::vector<std::pair<std::string, std::string>> parent_value_pairs(
    const DatasetContext& ctx, const std::vector<int>& parents, const ParentKey& key) {
    std::vector<std::pair<std::string, std::string>> out;
    for (size_t i = 0; i < parents.size(); ++i) {
        const auto& spec = ctx.features[static_cast<size_t>(parents[i])];
        out.emplace_back(spec.name, render_parent_value(spec, key[i]));
    }
    return out;
}

std::string key_to_string(const ParentKey& key) {
    std::string s = "[";
    for (size_t i = 0; i < key.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(key[i]);
    }
    return s + "]";
}

ResponseValidator pmf_object_validator(const std::vector<std::string>& categories) {
    return [categories](const std::string& text, json& out) -> std::string {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            return std::string("invalid json: ") + e.what();
        }
        if (!j.is_object()) return "not an object";
        if (j.size() != categories.size()) return "wrong number of categories";
        double sum = 0.0;
        for (const auto& cat : categories) {
            if (!j.contains(cat) || !j[cat].is_number()) return "missing category '" + cat + "'";
            double p = j[cat].get<double>();
            if (!(p >= 0.0) || !std::isfinite(p)) return "negative or non-finite probability";
            sum += p;
        }
        if (sum < 0.9 || sum > 1.1) return "probabilities sum to " + format_double(sum);
        out = std::move(j);
        return {};
    };
}

ResponseValidator quartile_array_validator() {
    return [](const std::string& text, json& out) -> std::string {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            return std::string("invalid json: ") + e.what();
        }
        if (!j.is_array() || j.size() != 4) return "expected an array of 4 probabilities";
        double sum = 0.0;
        for (const auto& item : j) {
            if (!item.is_number()) return "entries must be numbers";
            double p = item.get<double>();
            if (!(p >= 0.0) || !std::isfinite(p)) return "negative or non-finite probability";
            sum += p;
        }
        if (sum < 0.9 || sum > 1.1) return "probabilities sum to " + format_double(sum);
        out = std::move(j);
        return {};
    };
}

std::vector<double> normalized(std::vector<double> v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    for (auto& x : v) x /= sum;
    return v;
}

} // namespace

BnGenResult generate_bn(TextGenBackend& backend, const DatasetContext& ctx, std::uint64_t seed,
                        const BnGenConfig& cfg) {
    auto ctx_report = validate_context(ctx);
    if (!ctx_report.empty()) {
        throw ValidationError("generate_bn: invalid context '" + ctx.id +
                              "': " + ctx_report.front().reason);
    }
    ProceduralBackend fallback(cfg.fallback_params);
    TextGenBackend* fb = cfg.allow_procedural_fallback ? &fallback : nullptr;
    const std::string sys = system_prompt();
    const int d = static_cast<int>(ctx.features.size());

    BnGenResult result;
    result.bn.context_id = ctx.id;

    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(d));
    for (const auto& f : ctx.features) names.push_back(f.name);

    // One query for the global edge list.
    auto edges_validator = [](const std::string& text, json& out) -> std::string {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            return std::string("invalid json: ") + e.what();
        }
        if (!j.is_array()) return "not an array";
        for (const auto& e : j) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
                return "edges must be [parent, child] string pairs";
            }
        }
        out = std::move(j);
        return {};
    };
    auto edges_out = generate_with_retry(backend, fb, "bn_edges", ctx.id, sys,
                                         bn_structure_prompt(names), DecodeConfig{},
                                         mix_seed(seed, "bn_edges"), edges_validator);
    result.log.push_back(edges_out.record);

    std::vector<std::pair<int, int>> raw_edges;
    for (const auto& e : edges_out.value) {
        const std::string pname = e[0].get<std::string>();
        const std::string cname = e[1].get<std::string>();
        int p = ctx.feature_index(pname);
        int c = ctx.feature_index(cname);
        if (p < 0 || c < 0) {
            result.rejected_edges.push_back({pname, cname, "unknown feature"});
            continue;
        }
        raw_edges.emplace_back(p, c);
    }

    std::vector<int> topo(static_cast<size_t>(d));
    std::iota(topo.begin(), topo.end(), 0);
    result.bn.dag = enforce_acyclic(topo, raw_edges);

    // Parent cap, applied after the forward-edge filter.
    {
        std::vector<int> count(static_cast<size_t>(d), 0);
        std::vector<std::pair<int, int>> kept;
        for (const auto& e : result.bn.dag.edges) {
            if (count[static_cast<size_t>(e.second)] >= cfg.parent_cap) {
                result.rejected_edges.push_back({names[static_cast<size_t>(e.first)],
                                                 names[static_cast<size_t>(e.second)],
                                                 "parent cap"});
                continue;
            }
            ++count[static_cast<size_t>(e.second)];
            kept.push_back(e);
        }
        result.bn.dag.edges = std::move(kept);
    }

    // Per-node CPT queries, one per parent configuration.
    result.bn.cpts.resize(static_cast<size_t>(d));
    for (int node : result.bn.dag.order) {
        const auto& spec = ctx.features[static_cast<size_t>(node)];
        auto parents = result.bn.dag.parents_of(node);
        auto keys = enumerate_parent_keys(ctx, parents);
        const std::uint64_t node_seed = mix_seed(seed, "cpt", static_cast<std::uint64_t>(node));

        if (const auto* dk = std::get_if<DiscreteKind>(&spec.kind)) {
            DiscretePmf cpt;
            for (size_t ki = 0; ki < keys.size(); ++ki) {
                std::string config = render_parent_config(ctx, parents, keys[ki]);
                auto outcome = generate_with_retry(
                    backend, fb, "cpt", ctx.id + "/" + spec.name + "/" + key_to_string(keys[ki]),
                    sys, discrete_cpt_prompt(spec.name, dk->categories, config), DecodeConfig{},
                    mix_seed(node_seed, ki), pmf_object_validator(dk->categories));
                result.log.push_back(outcome.record);
                std::vector<double> pmf;
                pmf.reserve(dk->categories.size());
                for (const auto& cat : dk->categories) {
                    pmf.push_back(outcome.value[cat].get<double>());
                }
                cpt.table[keys[ki]] = normalized(std::move(pmf));
            }
            result.bn.cpts[static_cast<size_t>(node)] = std::move(cpt);
        } else {
            const auto& ck = std::get<ContinuousKind>(spec.kind);
            QuartileMixture cpt;
            for (size_t ki = 0; ki < keys.size(); ++ki) {
                std::string config = render_parent_config(ctx, parents, keys[ki]);
                auto outcome = generate_with_retry(
                    backend, fb, "cpt", ctx.id + "/" + spec.name + "/" + key_to_string(keys[ki]),
                    sys, continuous_cpt_prompt(spec.name, ck.lo, ck.hi, config), DecodeConfig{},
                    mix_seed(node_seed, ki), quartile_array_validator());
                result.log.push_back(outcome.record);
                std::vector<double> probs;
                for (const auto& item : outcome.value) probs.push_back(item.get<double>());
                probs = normalized(std::move(probs));
                cpt.table[keys[ki]] = {probs[0], probs[1], probs[2], probs[3]};
            }
            result.bn.cpts[static_cast<size_t>(node)] = std::move(cpt);
        }
    }

    auto report = validate_bn(result.bn, ctx);
    if (!report.empty()) {
        throw ValidationError("generate_bn produced an invalid spec: " + report.front().where +
                              ": " + report.front().reason);
    }
    return result;
}

namespace {

ParentKey key_for_row(const DatasetContext& ctx, const std::vector<int>& parents,
                      const Row& row) {
    ParentKey key;
    key.reserve(parents.size());
    for (int p : parents) {
        const auto& spec = ctx.features[static_cast<size_t>(p)];
        if (const auto* dk = std::get_if<DiscreteKind>(&spec.kind)) {
            const auto& cat = category_of(row[static_cast<size_t>(p)]);
            auto it = std::find(dk->categories.begin(), dk->categories.end(), cat);
            key.push_back(static_cast<int>(it - dk->categories.begin()));
        } else {
            const auto&ck = std::get<ContinuousKind>(spec.kind);
            key.push_back(quartile_of(number_of(row[static_cast<size_t>(p)]), ck.lo, ck.hi));
        }
    }
    return key;
}

} // namespace

Table sample_table(const BayesNetSpec& bn, const DatasetContext& ctx, size_t n_rows,
                   std::uint64_t seed) {
    const int d = static_cast<int>(ctx.features.size());
    std::vector<std::vector<int>> parents(static_cast<size_t>(d));
    for (int node : bn.dag.order) {
        parents[static_cast<size_t>(node)] = bn.dag.parents_of(node);
    }

    Table table;
    table.context_id = ctx.id;
    table.rows.reserve(n_rows);
    for (size_t r = 0; r < n_rows; ++r) {
        // Independent per-row streams: row order never affects a row's values.
        Rng rng(mix_seed(mix_seed(seed, "row"), r));
        Row row(static_cast<size_t>(d));
        for (int node : bn.dag.order) {
            const auto& spec = ctx.features[static_cast<size_t>(node)];
            ParentKey key = key_for_row(ctx, parents[static_cast<size_t>(node)], row);
            const Cpt& cpt = bn.cpts[static_cast<size_t>(node)];
            if (const auto* pmf = std::get_if<DiscretePmf>(&cpt)) {
                const auto& probs = pmf->table.at(key);
                size_t idx = rng.categorical(probs);
                const auto& cats = std::get<DiscreteKind>(spec.kind).categories;
                row[static_cast<size_t>(node)] = CategoryValue{cats[idx]};
            } else if (const auto* g = std::get_if<GaussianPdf>(&cpt)) {
                const auto& ck = std::get<ContinuousKind>(spec.kind);
                const auto& mv = g->table.at(key);
                double v = rng.normal(mv.mean, std::sqrt(mv.var));
                row[static_cast<size_t>(node)] = NumberValue{std::clamp(v, ck.lo, ck.hi)};
            } else {
                const auto& ck = std::get<ContinuousKind>(spec.kind);
                const auto& probs = std::get<QuartileMixture>(cpt).table.at(key);
                size_t q = rng.categorical(std::span<const double>(probs.data(), 4));
                double w = (ck.hi - ck.lo) / 4.0;
                double lo = ck.lo + static_cast<double>(q) * w;
                row[static_cast<size_t>(node)] = NumberValue{rng.uniform(lo, lo + w)};
            }
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::map<std::vector<int>, double> exact_joint(const BayesNetSpec& bn,
                                               const DatasetContext& ctx) {
    const int d = static_cast<int>(ctx.features.size());
    long long states = 1;
    std::vector<int> radix(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        const auto* dk = std::get_if<DiscreteKind>(&ctx.features[static_cast<size_t>(i)].kind);
        if (!dk) throw ValidationError("exact_joint: continuous node present");
        radix[static_cast<size_t>(i)] = static_cast<int>(dk->categories.size());
        states *= radix[static_cast<size_t>(i)];
        if (states > 1000000) throw ValidationError("exact_joint: state space too large");
    }
    std::vector<std::vector<int>> parents(static_cast<size_t>(d));
    for (int node : bn.dag.order) {
        parents[static_cast<size_t>(node)] = bn.dag.parents_of(node);
    }

    std::map<std::vector<int>, double> joint;
    std::vector<int> assign(static_cast<size_t>(d), 0);
    for (;;) {
        double p = 1.0;
        for (int node = 0; node < d; ++node) {
            ParentKey key;
            for (int par : parents[static_cast<size_t>(node)]) {
                key.push_back(assign[static_cast<size_t>(par)]);
            }
            const auto& pmf = std::get<DiscretePmf>(bn.cpts[static_cast<size_t>(node)]);
            p *= pmf.table.at(key)[static_cast<size_t>(assign[static_cast<size_t>(node)])];
        }
        joint[assign] = p;
        int pos = d - 1;
        while (pos >= 0) {
            if (++assign[static_cast<size_t>(pos)] < radix[static_cast<size_t>(pos)]) break;
            assign[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return joint;
}

double discrete_row_loglik(const BayesNetSpec& bn, const DatasetContext& ctx, const Row& row) {
    double ll = 0.0;
    for (int node : bn.dag.order) {
        const auto& spec = ctx.features[static_cast<size_t>(node)];
        const auto& dk = std::get<DiscreteKind>(spec.kind);
        ParentKey key = key_for_row(ctx, bn.dag.parents_of(node), row);
        const auto& pmf = std::get<DiscretePmf>(bn.cpts[static_cast<size_t>(node)]).table.at(key);
        const auto& cat = category_of(row[static_cast<size_t>(node)]);
        auto it = std::find(dk.categories.begin(), dk.categories.end(), cat);
        double p = pmf[static_cast<size_t>(it - dk.categories.begin())];
        ll += std::log(std::max(p, 1e-300));
    }
    return ll;
}

BayesNetSpec procedural_bn(const DatasetContext& ctx, std::uint64_t seed, const BnNoise& noise) {
    const int d = static_cast<int>(ctx.features.size());
    BayesNetSpec bn;
    bn.context_id = ctx.id;
    std::vector<int> topo(static_cast<size_t>(d));
    std::iota(topo.begin(), topo.end(), 0);
    bn.dag = enforce_acyclic(topo, procedural_edges(d, seed, noise.parent_cap));
    bn.cpts.resize(static_cast<size_t>(d));

    for (int node = 0; node < d; ++node) {
        const auto& spec = ctx.features[static_cast<size_t>(node)];
        auto parents = bn.dag.parents_of(node);
        auto keys = enumerate_parent_keys(ctx, parents);
        if (const auto* dk = std::get_if<DiscreteKind>(&spec.kind)) {
            DiscretePmf cpt;
            const double n = static_cast<double>(dk->categories.size());
            for (size_t ki = 0; ki < keys.size(); ++ki) {
                Rng rng(mix_seed(mix_seed(seed, "cpt"), static_cast<std::uint64_t>(node), ki));
                auto base = discrete_tendency(spec.name, dk->categories.size());
                double tilt = config_tilt(spec.name, parent_value_pairs(ctx, parents, keys[ki]));
                double total = 0.0;
                for (size_t i = 0; i < base.size(); ++i) {
                    double s = n > 1 ? 2.0 * static_cast<double>(i) / (n - 1.0) - 1.0 : 0.0;
                    base[i] *= std::exp(0.9 * tilt * s);
                    total += base[i];
                }
                std::vector<double> alphas(base.size());
                for (size_t i = 0; i < base.size(); ++i) {
                    alphas[i] = noise.pmf_concentration * (base[i] / total) + 0.02;
                }
                cpt.table[keys[ki]] = rng.dirichlet(alphas);
            }
            bn.cpts[static_cast<size_t>(node)] = std::move(cpt);
        } else {
            const auto& ck = std::get<ContinuousKind>(spec.kind);
            GaussianPdf cpt;
            ContinuousTendency t = continuous_tendency(spec.name);
            for (size_t ki = 0; ki < keys.size(); ++ki) {
                Rng rng(mix_seed(mix_seed(seed, "cpt"), static_cast<std::uint64_t>(node), ki));
                double tilt = config_tilt(spec.name, parent_value_pairs(ctx, parents, keys[ki]));
                double loc =
                    std::clamp(t.loc + 0.30 * tilt + noise.mean_jitter * rng.normal(), 0.03, 0.97);
                double scale =
                    std::clamp(t.scale * std::exp(noise.scale_jitter * rng.normal()), 0.02, 0.40);
                double width = ck.hi - ck.lo;
                cpt.table[keys[ki]] = {ck.lo + loc * width, (scale * width) * (scale * width)};
            }
            bn.cpts[static_cast<size_t>(node)] = std::move(cpt);
        }
    }
    return bn;
}

BayesNetSpec perturb_cpts(const BayesNetSpec& bn, double concentration, std::uint64_t seed) {
    BayesNetSpec out = bn;
    std::uint64_t node_counter = 0;
    for (auto& cpt : out.cpts) {
        ++node_counter;
        std::uint64_t row_counter = 0;
        if (auto* pmf = std::get_if<DiscretePmf>(&cpt)) {
            for (auto& [key, probs] : pmf->table) {
                Rng rng(mix_seed(mix_seed(seed, node_counter), ++row_counter));
                std::vector<double> alphas(probs.size());
                for (size_t i = 0; i < probs.size(); ++i) {
                    alphas[i] = concentration * probs[i] + 1e-3;
                }
                probs = rng.dirichlet(alphas);
            }
        } else if (auto* qm = std::get_if<QuartileMixture>(&cpt)) {
            for (auto& [key, probs] : qm->table) {
                Rng rng(mix_seed(mix_seed(seed, node_counter), ++row_counter));
                std::vector<double> alphas(4);
                for (size_t i = 0; i < 4; ++i) alphas[i] = concentration * probs[i] + 1e-3;
                auto drawn = rng.dirichlet(alphas);
                probs = {drawn[0], drawn[1], drawn[2], drawn[3]};
            }
        } else if (auto* g = std::get_if<GaussianPdf>(&cpt)) {
            for (auto& [key, mv] : g->table) {
                Rng rng(mix_seed(mix_seed(seed, node_counter), ++row_counter));
                mv.mean += rng.normal() * std::sqrt(mv.var / concentration);
            }
        }
    }
    return out;
}

ValidationReport validate_bn(const BayesNetSpec& bn, const DatasetContext& ctx) {
    ValidationReport report;
    const int d = static_cast<int>(ctx.features.size());
    if (static_cast<int>(bn.dag.order.size()) != d) {
        report.push_back({"dag", "order size mismatch"});
        return report;
    }
    std::vector<int> position(static_cast<size_t>(d), -1);
    for (int i = 0; i < d; ++i) {
        int node = bn.dag.order[static_cast<size_t>(i)];
        if (node < 0 || node >= d || position[static_cast<size_t>(node)] != -1) {
            report.push_back({"dag", "order is not a permutation"});
            return report;
        }
        position[static_cast<size_t>(node)] = i;
    }
    for (const auto& [p, c] : bn.dag.edges) {
        if (p < 0 || p >= d || c < 0 || c >= d ||
            position[static_cast<size_t>(p)] >= position[static_cast<size_t>(c)]) {
            report.push_back({"dag", "edge violates topological order"});
        }
    }
    if (static_cast<int>(bn.cpts.size()) != d) {
        report.push_back({"cpts", "one CPT required per node"});
        return report;
    }
    for (int node = 0; node < d; ++node) {
        const auto& spec = ctx.features[static_cast<size_t>(node)];
        const auto& cpt = bn.cpts[static_cast<size_t>(node)];
        auto parents = bn.dag.parents_of(node);
        auto keys = enumerate_parent_keys(ctx, parents);
        auto check_keys = [&](const auto& table) {
            if (table.size() != keys.size()) {
                report.push_back({spec.name, "incomplete CPT table"});
                return false;
            }
            for (const auto& k : keys) {
                if (!table.count(k)) {
                    report.push_back({spec.name, "missing parent configuration"});
                    return false;
                }
            }
            return true;
        };
        if (const auto* dk = std::get_if<DiscreteKind>(&spec.kind)) {
            const auto* pmf = std::get_if<DiscretePmf>(&cpt);
            if (!pmf) {
                report.push_back({spec.name, "discrete node requires a DiscretePmf"});
                continue;
            }
            if (!check_keys(pmf->table)) continue;
            for (const auto& [key, probs] : pmf->table) {
                if (probs.size() != dk->categories.size()) {
                    report.push_back({spec.name, "pmf arity mismatch"});
                    continue;
                }
                double sum = 0.0;
                for (double p : probs) {
                    if (!(p >= 0.0)) report.push_back({spec.name, "negative probability"});
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-9) {
                    report.push_back({spec.name, "pmf sums to " + format_double(sum)});
                }
            }
        } else {
            if (const auto* g = std::get_if<GaussianPdf>(&cpt)) {
                if (!check_keys(g->table)) continue;
                for (const auto& [key, mv] : g->table) {
                    if (!(mv.var > 0.0) || !std::isfinite(mv.var) || !std::isfinite(mv.mean)) {
                        report.push_back({spec.name, "invalid gaussian parameters"});
                    }
                }
            } else if (const auto* qm = std::get_if<QuartileMixture>(&cpt)) {
                if (!check_keys(qm->table)) continue;
                for (const auto& [key, probs] : qm->table) {
                    double sum = 0.0;
                    for (double p : probs) {
                        if (!(p >= 0.0)) report.push_back({spec.name, "negative probability"});
                        sum += p;
                    }
                    if (std::abs(sum - 1.0) > 1e-9) {
                        report.push_back({spec.name, "quartile probs sum to " + format_double(sum)});
                    }
                }
            } else {
                report.push_back({spec.name, "continuous node requires Gaussian or quartile CPT"});
            }
        }
    }
    return report;
}

json bn_to_json(const BayesNetSpec& bn, const DatasetContext& ctx) {
    json j;
    j["context_id"] = bn.context_id;
    json order = json::array();
    for (int node : bn.dag.order) order.push_back(ctx.features[static_cast<size_t>(node)].name);
    j["order"] = order;
    json edges = json::array();
    for (const auto& [p, c] : bn.dag.edges) {
        edges.push_back(json::array({ctx.features[static_cast<size_t>(p)].name,
                                     ctx.features[static_cast<size_t>(c)].name}));
    }
    j["edges"] = edges;
    json cpts = json::array();
    for (size_t node = 0; node < bn.cpts.size(); ++node) {
        json entry;
        entry["node"] = ctx.features[node].name;
        json rows = json::array();
        if (const auto* pmf = std::get_if<DiscretePmf>(&bn.cpts[node])) {
            entry["kind"] = "discrete_pmf";
            for (const auto& [key, probs] : pmf->table) {
                rows.push_back(json{{"key", key}, {"pmf", probs}});
            }
        } else if (const auto* g = std::get_if<GaussianPdf>(&bn.cpts[node])) {
            entry["kind"] = "gaussian";
            for (const auto& [key, mv] : g->table) {
                rows.push_back(json{{"key", key}, {"mean", mv.mean}, {"var", mv.var}});
            }
        } else {
            entry["kind"] = "quartile_mixture";
            for (const auto& [key, probs] : std::get<QuartileMixture>(bn.cpts[node]).table) {
                rows.push_back(json{{"key", key}, {"probs", probs}});
            }
        }
        entry["rows"] = rows;
        cpts.push_back(entry);
    }
    j["cpts"] = cpts;
    return j;
}

BayesNetSpec bn_from_json(const json& j, const DatasetContext& ctx) {
    BayesNetSpec bn;
    bn.context_id = j.at("context_id").get<std::string>();
    for (const auto& name : j.at("order")) {
        int idx = ctx.feature_index(name.get<std::string>());
        if (idx < 0) throw ValidationError("bn_from_json: unknown feature " + name.dump());
        bn.dag.order.push_back(idx);
    }
    for (const auto& e : j.at("edges")) {
        bn.dag.edges.emplace_back(ctx.feature_index(e[0].get<std::string>()),
                                  ctx.feature_index(e[1].get<std::string>()));
    }
    for (const auto& entry : j.at("cpts")) {
        const std::string kind = entry.at("kind").get<std::string>();
        if (kind == "discrete_pmf") {
            DiscretePmf cpt;
            for (const auto& row : entry.at("rows")) {
                cpt.table[row.at("key").get<ParentKey>()] =
                    row.at("pmf").get<std::vector<double>>();
            }
            bn.cpts.push_back(std::move(cpt));
        } else if (kind == "gaussian") {
            GaussianPdf cpt;
            for (const auto& row : entry.at("rows")) {
                cpt.table[row.at("key").get<ParentKey>()] =
                    GaussianParams{row.at("mean").get<double>(), row.at("var").get<double>()};
            }
            bn.cpts.push_back(std::move(cpt));
        } else if (kind == "quartile_mixture") {
            QuartileMixture cpt;
            for (const auto& row : entry.at("rows")) {
                auto probs = row.at("probs").get<std::vector<double>>();
                if (probs.size() != 4) throw ValidationError("bn_from_json: bad quartile row");
                cpt.table[row.at("key").get<ParentKey>()] = {probs[0], probs[1], probs[2],
                                                             probs[3]};
            }
            bn.cpts.push_back(std::move(cpt));
        } else {
            throw ValidationError("bn_from_json: unknown cpt kind '" + kind + "'");
        }
    }
    return bn;
}

} // namespace texr
