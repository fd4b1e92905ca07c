#include "texr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

using nlohmann::json;

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

struct TargetChoice {
    int discrete = -1;   // last discrete feature, for accuracy
    int continuous = -1; // last continuous feature, for rmse
};

TargetChoice pick_targets(const DatasetContext& ctx) {
    TargetChoice t;
    for (size_t i = 0; i < ctx.features.size(); ++i) {
        if (is_continuous(ctx.features[i].kind)) {
            t.continuous = static_cast<int>(i);
        } else {
            t.discrete = static_cast<int>(i);
        }
    }
    return t;
}

std::vector<ObservedValue> observed_except(const Row& row, int target) {
    std::vector<ObservedValue> obs;
    for (size_t i = 0; i < row.size(); ++i) {
        if (static_cast<int>(i) != target) obs.push_back({static_cast<int>(i), row[i]});
    }
    return obs;
}

// Masked-conditional NLL over pre-drawn (row, mask) pairs — identical pairs
// for every arm, so comparisons are paired.
struct EvalTask {
    size_t row;
    MaskSampler::Mask mask;
};

double masked_nll(const ConditionalModel& model, const EncodedContext& enc, const Table& rows,
                  const std::vector<EvalTask>& tasks) {
    double total = 0.0;
    for (const auto& task : tasks) {
        const Row& row = rows.rows[task.row];
        std::vector<ObservedValue> obs;
        for (int f : task.mask.observed) obs.push_back({f, row[static_cast<size_t>(f)]});
        total += target_nll(model, enc, obs, task.mask.target,
                            row[static_cast<size_t>(task.mask.target)]);
    }
    return total / static_cast<double>(tasks.size());
}

} // namespace

EvalReport evaluate(const ArmModels& arms, const std::vector<GroundTruthDgp>& held_out,
                    const std::vector<std::string>& training_context_hashes,
                    const EvalConfig& cfg) {
    if (arms.empty()) throw ValidationError("evaluate: no arms");
    if (cfg.seeds.empty()) throw ValidationError("evaluate: seeds must be explicit");

    std::set<std::string> train_hashes(training_context_hashes.begin(),
                                       training_context_hashes.end());
    for (const auto& dgp : held_out) {
        if (train_hashes.count(context_content_hash(dgp.ctx))) {
            throw ContaminationError("held-out context '" + dgp.ctx.id +
                                     "' appears in a training manifest");
        }
    }

    EvalReport report;
    report.k_shot = cfg.k_shot;
    for (const auto& [name, model] : arms) {
        (void)model;
        report.arms.push_back(name);
    }

    for (const auto& dgp : held_out) {
        const std::string ctx_hash = context_content_hash(dgp.ctx);
        const TargetChoice targets = pick_targets(dgp.ctx);
        const int d = static_cast<int>(dgp.ctx.features.size());

        for (std::uint64_t seed : cfg.seeds) {
            const std::uint64_t base = mix_seed(seed, ctx_hash);
            Table test = sample_table(dgp.bn, dgp.ctx, static_cast<size_t>(cfg.test_rows),
                                      mix_seed(base, "test_rows"));
            Table support;
            if (cfg.k_shot > 0) {
                support = sample_table(dgp.bn, dgp.ctx, static_cast<size_t>(cfg.k_shot),
                                       mix_seed(base, "support"));
            }
            std::vector<EvalTask> tasks;
            Rng mask_rng(mix_seed(base, "masks"));
            for (size_t r = 0; r < test.rows.size(); ++r) {
                for (int k = 0; k < cfg.masks_per_row; ++k) {
                    tasks.push_back({r, MaskSampler::sample_with(mask_rng, d)});
                }
            }

            for (const auto& [arm_name, model] : arms) {
                EncodedContext enc = encode_context(model->hp(), dgp.ctx);
                EvalCell cell;
                cell.context_hash = ctx_hash;
                cell.seed = seed;
                cell.arm = arm_name;
                cell.zero_shot_nll = masked_nll(*model, enc, test, tasks);

                if (cfg.k_shot > 0) {
                    auto tuned = finetune(*model, dgp.ctx, support, cfg.finetune_cfg,
                                          mix_seed(base, "finetune"));
                    cell.k_shot_nll = masked_nll(tuned, enc, test, tasks);
                } else {
                    cell.k_shot_nll = cell.zero_shot_nll;
                }

                if (targets.discrete >= 0) {
                    int hits = 0;
                    for (const auto& row : test.rows) {
                        auto dist = predict(*model, enc, observed_except(row, targets.discrete),
                                            targets.discrete);
                        const auto& pmf = std::get<CategoricalPmf>(dist).probs;
                        size_t best = static_cast<size_t>(
                            std::max_element(pmf.begin(), pmf.end()) - pmf.begin());
                        const auto& cats =
                            std::get<DiscreteKind>(
                                dgp.ctx.features[static_cast<size_t>(targets.discrete)].kind)
                                .categories;
                        if (cats[best] ==
                            category_of(row[static_cast<size_t>(targets.discrete)])) {
                            ++hits;
                        }
                    }
                    cell.accuracy = static_cast<double>(hits) /
                                    static_cast<double>(test.rows.size());
                }
                if (targets.continuous >= 0) {
                    double se = 0.0;
                    for (const auto& row : test.rows) {
                        auto dist = predict(*model, enc, observed_except(row, targets.continuous),
                                            targets.continuous);
                        double err = dist_mean(dist) -
                                     number_of(row[static_cast<size_t>(targets.continuous)]);
                        se += err * err;
                    }
                    cell.rmse = std::sqrt(se / static_cast<double>(test.rows.size()));
                }
                report.cells.push_back(std::move(cell));
            }
        }
    }

    for (const auto& arm : report.arms) {
        std::vector<double> zero, kshot, acc, rmse;
        for (const auto& cell : report.cells) {
            if (cell.arm != arm) continue;
            zero.push_back(cell.zero_shot_nll);
            kshot.push_back(cell.k_shot_nll);
            if (cell.accuracy >= 0) acc.push_back(cell.accuracy);
            if (cell.rmse >= 0) rmse.push_back(cell.rmse);
        }
        ArmAggregate agg;
        agg.median_zero_shot_nll = median(zero);
        agg.median_k_shot_nll = median(kshot);
        if (!acc.empty()) {
            agg.mean_accuracy = 0.0;
            for (double a : acc) agg.mean_accuracy += a / static_cast<double>(acc.size());
        }
        if (!rmse.empty()) {
            agg.mean_rmse = 0.0;
            for (double r : rmse) agg.mean_rmse += r / static_cast<double>(rmse.size());
        }
        report.aggregates[arm] = agg;
    }
    return report;
}

json report_to_json(const EvalReport& report) {
    json j;
    j["arms"] = report.arms;
    j["k_shot"] = report.k_shot;
    j["cells"] = json::array();
    for (const auto& c : report.cells) {
        j["cells"].push_back(json{{"context_hash", c.context_hash},
                                  {"seed", c.seed},
                                  {"arm", c.arm},
                                  {"zero_shot_nll", c.zero_shot_nll},
                                  {"k_shot_nll", c.k_shot_nll},
                                  {"accuracy", c.accuracy},
                                  {"rmse", c.rmse}});
    }
    j["aggregates"] = json::object();
    for (const auto& [arm, agg] : report.aggregates) {
        j["aggregates"][arm] = json{{"median_zero_shot_nll", agg.median_zero_shot_nll},
                                    {"median_k_shot_nll", agg.median_k_shot_nll},
                                    {"mean_accuracy", agg.mean_accuracy},
                                    {"mean_rmse", agg.mean_rmse}};
    }
    return j;
}

std::string report_to_csv(const EvalReport& report) {
    std::string out = "arm,median_zero_shot_nll,median_k_shot_nll,mean_accuracy,mean_rmse\n";
    for (const auto& arm : report.arms) {
        const auto& agg = report.aggregates.at(arm);
        out += arm + "," + format_double(agg.median_zero_shot_nll) + "," +
               format_double(agg.median_k_shot_nll) + "," + format_double(agg.mean_accuracy) +
               "," + format_double(agg.mean_rmse) + "\n";
    }
    return out;
}

void emit_report(const EvalReport& report, const std::string& dir) {
    std::filesystem::create_directories(dir);
    write_file(dir + "/report.json", report_to_json(report).dump(2) + "\n");
    write_file(dir + "/report.csv", report_to_csv(report));
}

EvalReport run_experiment(const ExperimentConfig& cfg) {
    const auto& pc = cfg.pipeline;
    if (cfg.eval.seeds.empty()) throw ValidationError("run_experiment: eval.seeds required");

    // Fixed pools: the real collection and the held-out DGPs.
    auto real_pool = make_dgp_pool(pc.real.pool_count, pc.real.pool_seed, pc.real.pool_noise);
    auto held_out = make_dgp_pool(cfg.held_out_count, cfg.held_out_seed, cfg.held_out_noise);
    {
        // The held-out pool must be disjoint from the real pool.
        std::set<std::string> real_hashes;
        for (const auto& d : real_pool) real_hashes.insert(context_content_hash(d.ctx));
        for (const auto& d : held_out) {
            if (real_hashes.count(context_content_hash(d.ctx))) {
                throw ContaminationError("held-out pool overlaps the real pool: " + d.ctx.id);
            }
        }
    }

    std::vector<DatasetContext> real_ctx;
    std::vector<Table> real_tab;
    for (size_t i = 0; i < real_pool.size(); ++i) {
        real_ctx.push_back(real_pool[i].ctx);
        real_tab.push_back(sample_table(real_pool[i].bn, real_pool[i].ctx,
                                        static_cast<size_t>(pc.real.pool_rows),
                                        mix_seed(pc.real.pool_seed, "table", i)));
    }
    auto real_sets = [&] {
        std::vector<TrainingSet> out;
        for (size_t i = 0; i < real_ctx.size(); ++i) out.push_back({&real_ctx[i], &real_tab[i]});
        return out;
    }();

    EvalReport combined;
    combined.k_shot = cfg.eval.k_shot;
    combined.arms = {"real_only", "te_nor", "te_dr", "te_xr"};

    for (std::uint64_t seed : cfg.eval.seeds) {
        // --- corpus construction for this seed -------------------------------
        ProceduralBackend backend(pc.backend.procedural);
        auto universe =
            build_topic_universe(backend, pc.budget, mix_seed(pc.seeds.expand, seed));
        auto corpus = generate_contexts(backend, universe.topics, pc.budget,
                                        mix_seed(pc.seeds.expand, seed));

        std::vector<DatasetContext> synth_ctx;
        std::vector<Table> weak_tab;
        for (const auto& gc : corpus.contexts) {
            BnGenConfig bn_cfg;
            bn_cfg.fallback_params = pc.backend.procedural;
            auto gen = generate_bn(backend, gc.ctx,
                                   mix_seed(mix_seed(pc.seeds.instantiate, seed), gc.ctx.id),
                                   bn_cfg);
            weak_tab.push_back(sample_table(gen.bn, gc.ctx,
                                            static_cast<size_t>(pc.budget.rows_per_dataset),
                                            mix_seed(mix_seed(pc.seeds.instantiate, seed), "rows",
                                                     synth_ctx.size())));
            synth_ctx.push_back(gc.ctx);
        }

        std::vector<TrainingSet> weak_sets;
        for (size_t i = 0; i < synth_ctx.size(); ++i) {
            weak_sets.push_back({&synth_ctx[i], &weak_tab[i]});
        }

        std::vector<size_t> retained_idx(synth_ctx.size());
        std::iota(retained_idx.begin(), retained_idx.end(), 0);
        if (pc.stages.filter) {
            auto ens = train_ensemble(real_sets, pc.hp, pc.train_ensemble,
                                      mix_seed(pc.seeds.filter, seed));
            FilterConfig fc;
            fc.retain_fraction = pc.retain_fraction;
            fc.row_cap = pc.filter_row_cap;
            fc.subsample_seed = mix_seed(pc.seeds.filter, seed);
            auto result = filter_corpus(ens, weak_sets, fc);
            retained_idx = result.retained;
            std::sort(retained_idx.begin(), retained_idx.end());
        }
        std::vector<TrainingSet> kept_sets;
        std::vector<std::string> synth_ids;
        for (size_t i : retained_idx) {
            kept_sets.push_back(weak_sets[i]);
            synth_ids.push_back(synth_ctx[i].id);
        }

        // --- arms -------------------------------------------------------------
        RefineConfig rc;
        rc.hp = pc.hp;
        rc.side_train = pc.train_side;
        rc.rounds = pc.refine_rounds;

        auto real_only =
            train(real_sets, pc.hp, pc.train_full, mix_seed(seed, "arm_real_only")).model;

        std::vector<TrainingSet> nor_all(real_sets);
        nor_all.insert(nor_all.end(), kept_sets.begin(), kept_sets.end());
        auto te_nor = train(nor_all, pc.hp, pc.train_full, mix_seed(seed, "arm_te_nor")).model;

        auto dr = direct_refine(real_sets, kept_sets, rc, mix_seed(seed, "arm_dr_refine"));
        std::vector<TrainingSet> dr_sets;
        for (size_t k = 0; k < dr.tables.size(); ++k) {
            dr_sets.push_back({kept_sets[k].ctx, &dr.tables[k].table});
        }
        auto te_dr = consolidate(real_sets, dr_sets, pc.hp, pc.train_full,
                                 mix_seed(seed, "arm_te_dr"));

        std::vector<std::string> real_ids;
        for (const auto& c : real_ctx) real_ids.push_back(c.id);
        auto split = make_split(real_ids, synth_ids, mix_seed(mix_seed(pc.seeds.refine, seed), "split"));
        auto xr = cross_refine(real_sets, kept_sets, split, rc, mix_seed(seed, "arm_xr_refine"));
        std::vector<TrainingSet> xr_sets;
        for (size_t k = 0; k < xr.tables.size(); ++k) {
            xr_sets.push_back({kept_sets[k].ctx, &xr.tables[k].table});
        }
        auto te_xr = consolidate(real_sets, xr_sets, pc.hp, pc.train_full,
                                 mix_seed(seed, "arm_te_xr"));

        // --- paired evaluation for this seed -----------------------------------
        std::vector<std::string> train_hashes;
        for (const auto& c : real_ctx) train_hashes.push_back(context_content_hash(c));
        for (const auto& c : synth_ctx) train_hashes.push_back(context_content_hash(c));

        EvalConfig per_seed = cfg.eval;
        per_seed.seeds = {seed};
        ArmModels arms{{"real_only", &real_only},
                       {"te_nor", &te_nor},
                       {"te_dr", &te_dr},
                       {"te_xr", &te_xr}};
        auto part = evaluate(arms, held_out, train_hashes, per_seed);
        combined.cells.insert(combined.cells.end(), part.cells.begin(), part.cells.end());
    }

    // Recompute aggregates over the full cell set.
    for (const auto& arm : combined.arms) {
        std::vector<double> zero, kshot, acc, rmse;
        for (const auto& cell : combined.cells) {
            if (cell.arm != arm) continue;
            zero.push_back(cell.zero_shot_nll);
            kshot.push_back(cell.k_shot_nll);
            if (cell.accuracy >= 0) acc.push_back(cell.accuracy);
            if (cell.rmse >= 0) rmse.push_back(cell.rmse);
        }
        ArmAggregate agg;
        agg.median_zero_shot_nll = median(zero);
        agg.median_k_shot_nll = median(kshot);
        if (!acc.empty()) {
            agg.mean_accuracy = 0.0;
            for (double a : acc) agg.mean_accuracy += a / static_cast<double>(acc.size());
        }
        if (!rmse.empty()) {
            agg.mean_rmse = 0.0;
            for (double r : rmse) agg.mean_rmse += r / static_cast<double>(rmse.size());
        }
        combined.aggregates[arm] = agg;
    }
    return combined;
}

} // namespace texr
