#include "texr/refinement.hpp"

#include <algorithm>
#include <numeric>

#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

SplitPlan make_split(const std::vector<std::string>& real_ids,
                     const std::vector<std::string>& synth_ids, std::uint64_t seed) {
    if (real_ids.empty() || synth_ids.empty()) {
        throw ValidationError("make_split: both id lists must be non-empty");
    }
    SplitPlan plan;
    plan.seed = seed;
    auto assign = [&](const std::vector<std::string>& ids, std::string_view salt) {
        std::vector<size_t> order(ids.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, salt));
        rng.shuffle(order);
        for (size_t i = 0; i < order.size(); ++i) {
            if (plan.assignment.count(ids[order[i]])) {
                throw ValidationError("make_split: duplicate dataset id '" + ids[order[i]] + "'");
            }
            plan.assignment[ids[order[i]]] = (i % 2 == 0) ? 1 : 2;
        }
    };
    assign(real_ids, "real");
    assign(synth_ids, "synth");
    return plan;
}

namespace {

std::vector<int> fresh_permutation(size_t d, Rng& rng) {
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    return perm;
}

Table regenerate_table(const ConditionalModel& model, const DatasetContext& ctx,
                       const Table& weak, std::uint64_t table_seed) {
    EncodedContext enc = encode_context(model.hp(), ctx);
    Table out;
    out.context_id = weak.context_id;
    out.rows.reserve(weak.rows.size());
    for (size_t r = 0; r < weak.rows.size(); ++r) {
        Rng perm_rng(mix_seed(mix_seed(table_seed, "perm"), r));
        auto perm = fresh_permutation(ctx.features.size(), perm_rng);
        out.rows.push_back(sample_joint(model, enc, perm, mix_seed(mix_seed(table_seed, "row"), r)));
    }
    return out;
}

} // namespace

RefinedCorpus cross_refine(const std::vector<TrainingSet>& real,
                           const std::vector<TrainingSet>& weak, const SplitPlan& split,
                           const RefineConfig& cfg, std::uint64_t seed) {
    RefinedCorpus corpus;
    corpus.split = split;
    corpus.mode = "cross";
    corpus.seed = seed;

    // Working copy of the synthetic tables; rounds > 1 re-refine the output.
    std::vector<Table> current;
    current.reserve(weak.size());
    for (const auto& ds : weak) current.push_back(*ds.table);

    for (int round = 0; round < cfg.rounds; ++round) {
        const std::uint64_t round_seed = mix_seed(seed, "round", static_cast<std::uint64_t>(round));
        std::vector<TrainingSet> side1, side2;
        for (const auto& ds : real) {
            (split.side_of(ds.ctx->id) == 1 ? side1 : side2).push_back(ds);
        }
        for (size_t i = 0; i < weak.size(); ++i) {
            TrainingSet ds{weak[i].ctx, &current[i]};
            (split.side_of(ds.ctx->id) == 1 ? side1 : side2).push_back(ds);
        }

        auto train_side = [&](const std::vector<TrainingSet>& side, int which) {
            try {
                return train(side, cfg.hp, cfg.side_train,
                             mix_seed(round_seed, which == 1 ? "side1" : "side2"))
                    .model;
            } catch (const std::exception& e) {
                throw TrainingError("cross_refine side " + std::to_string(which) + ": " +
                                    e.what());
            }
        };
        ConditionalModel p1 = train_side(side1, 1);
        ConditionalModel p2 = train_side(side2, 2);

        corpus.tables.clear();
        for (size_t i = 0; i < weak.size(); ++i) {
            const auto& ctx = *weak[i].ctx;
            const int table_side = split.side_of(ctx.id);
            const int refiner = table_side == 1 ? 2 : 1;
            if (refiner == table_side) {
                throw IntegrityError("cross_refine: refiner equals training side for " + ctx.id);
            }
            const ConditionalModel& model = refiner == 1 ? p1 : p2;
            const std::uint64_t table_seed = mix_seed(round_seed, ctx.id);
            RefinedTable rt;
            rt.context_id = ctx.id;
            rt.table = regenerate_table(model, ctx, current[i], table_seed);
            rt.table_side = table_side;
            rt.refined_by = refiner;
            rt.row_seed_base = table_seed;
            current[i] = rt.table;
            corpus.tables.push_back(std::move(rt));
        }
    }

    // Degenerate budgets (0 rounds) pass the weak tables through untouched.
    if (corpus.tables.empty()) {
        for (size_t i = 0; i < weak.size(); ++i) {
            RefinedTable rt;
            rt.context_id = weak[i].ctx->id;
            rt.table = current[i];
            rt.table_side = split.side_of(weak[i].ctx->id);
            rt.refined_by = 0;
            corpus.tables.push_back(std::move(rt));
        }
    }
    return corpus;
}

RefinedCorpus direct_refine(const std::vector<TrainingSet>& real,
                            const std::vector<TrainingSet>& weak, const RefineConfig& cfg,
                            std::uint64_t seed) {
    RefinedCorpus corpus;
    corpus.mode = "direct";
    corpus.seed = seed;
    if (weak.empty()) return corpus;

    std::vector<TrainingSet> all(real);
    all.insert(all.end(), weak.begin(), weak.end());
    ConditionalModel model = train(all, cfg.hp, cfg.side_train, mix_seed(seed, "direct")).model;

    for (const auto& ds : weak) {
        const std::uint64_t table_seed = mix_seed(seed, ds.ctx->id);
        RefinedTable rt;
        rt.context_id = ds.ctx->id;
        rt.table = regenerate_table(model, *ds.ctx, *ds.table, table_seed);
        rt.table_side = 0;
        rt.refined_by = 0;
        rt.row_seed_base = table_seed;
        corpus.tables.push_back(std::move(rt));
    }
    return corpus;
}

ConditionalModel consolidate(const std::vector<TrainingSet>& real,
                             const std::vector<TrainingSet>& refined, const Hyperparams& hp,
                             const TrainConfig& cfg, std::uint64_t seed,
                             ConsolidateProtocol protocol) {
    if (protocol == ConsolidateProtocol::PretrainContinue && !refined.empty()) {
        ConditionalModel pre =
            train(refined, hp, cfg, mix_seed(seed, "pretrain")).model;
        return train_from(std::move(pre), real, cfg, mix_seed(seed, "continue")).model;
    }
    std::vector<TrainingSet> all(real);
    all.insert(all.end(), refined.begin(), refined.end());
    return train(all, hp, cfg, mix_seed(seed, "consolidate")).model;
}

} // namespace texr
