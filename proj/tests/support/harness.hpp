#pragma once

// Controlled ground-truth-DGP harness: real tables sampled from true
// Bayesian networks, weak tables from Dirichlet-perturbed copies. Contexts
// are all-discrete so exact joints and row log likelihoods are available.

#include <string>
#include <vector>

#include "texr/archetypes.hpp"
#include "texr/bayes_net.hpp"
#include "texr/context.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"
#include "texr/train.hpp"
#include "texr/types.hpp"

namespace texr::testing {

inline DatasetContext discrete_context(int n_features, std::uint64_t seed,
                                       const std::string& tag) {
    const auto& pool = archetype_pool();
    std::vector<int> disc;
    for (size_t i = 0; i < pool.size(); ++i) {
        if (!pool[i].continuous) disc.push_back(static_cast<int>(i));
    }
    Rng rng(mix_seed(seed, "discrete_ctx"));
    rng.shuffle(disc);
    DatasetContext ctx;
    ctx.topic = tag;
    ctx.domain = "harness";
    ctx.description = "All-discrete harness context " + tag + ".";
    for (int i = 0; i < n_features; ++i) {
        const Archetype& a = pool[static_cast<size_t>(disc[static_cast<size_t>(i)])];
        ctx.features.push_back({a.name, DiscreteKind{a.categories}, a.description});
    }
    ctx.id = make_context_id(ctx);
    return ctx;
}

struct HarnessDataset {
    DatasetContext ctx;
    BayesNetSpec true_bn;
    Table table; // sampled from true_bn (real) or a corrupted copy (weak)
};

// Corruption for the controlled harness: every pmf row is resampled from a
// symmetric Dirichlet with total concentration `concentration`. Unlike the
// mean-preserving perturb_cpts, the rows' expectation moves to uniform, so
// the corruption is visible to cross-entropy scoring.
inline BayesNetSpec corrupt_bn(const BayesNetSpec& bn, double concentration,
                               std::uint64_t seed) {
    BayesNetSpec out = bn;
    std::uint64_t node_counter = 0;
    for (auto& cpt : out.cpts) {
        ++node_counter;
        std::uint64_t row_counter = 0;
        auto& pmf = std::get<DiscretePmf>(cpt);
        for (auto& [key, probs] : pmf.table) {
            Rng rng(mix_seed(mix_seed(seed, node_counter), ++row_counter));
            std::vector<double> alphas(probs.size(),
                                       concentration / static_cast<double>(probs.size()) + 1e-3);
            probs = rng.dirichlet(alphas);
        }
    }
    return out;
}

struct Harness {
    std::vector<HarnessDataset> real;
    std::vector<HarnessDataset> weak;

    std::vector<TrainingSet> real_sets() const {
        std::vector<TrainingSet> out;
        for (const auto& d : real) out.push_back({&d.ctx, &d.table});
        return out;
    }
    std::vector<TrainingSet> weak_sets() const {
        std::vector<TrainingSet> out;
        for (const auto& d : weak) out.push_back({&d.ctx, &d.table});
        return out;
    }
};

inline Harness make_harness(int n_real, int n_weak, int rows, double perturb_concentration,
                            std::uint64_t seed) {
    Harness h;
    BnNoise tight;
    tight.pmf_concentration = 60.0;
    for (int i = 0; i < n_real + n_weak; ++i) {
        const bool is_real = i < n_real;
        HarnessDataset d;
        d.ctx = discrete_context(4 + i % 2, mix_seed(seed, "ctx", static_cast<std::uint64_t>(i)),
                                 (is_real ? "real_" : "weak_") + std::to_string(i));
        d.true_bn = procedural_bn(d.ctx, mix_seed(seed, "bn", static_cast<std::uint64_t>(i)),
                                  tight);
        if (is_real) {
            d.table = sample_table(d.true_bn, d.ctx, static_cast<size_t>(rows),
                                   mix_seed(seed, "rows", static_cast<std::uint64_t>(i)));
            h.real.push_back(std::move(d));
        } else {
            auto weak_bn = corrupt_bn(d.true_bn, perturb_concentration,
                                      mix_seed(seed, "perturb", static_cast<std::uint64_t>(i)));
            d.table = sample_table(weak_bn, d.ctx, static_cast<size_t>(rows),
                                   mix_seed(seed, "rows", static_cast<std::uint64_t>(i)));
            h.weak.push_back(std::move(d));
        }
    }
    return h;
}

// Mean per-row NLL of `table` under the dataset's true network.
inline double true_dgp_nll(const HarnessDataset& d, const Table& table) {
    double total = 0.0;
    for (const auto& row : table.rows) {
        total += -discrete_row_loglik(d.true_bn, d.ctx, row);
    }
    return table.rows.empty() ? 0.0 : total / static_cast<double>(table.rows.size());
}

} // namespace texr::testing
