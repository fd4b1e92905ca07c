// texr: task expansion + cross refinement pipeline CLI.

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/evaluate.hpp"
#include "texr/hash.hpp"
#include "texr/pipeline.hpp"

namespace fs = std::filesystem;
using namespace texr;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
    auto* opt = cmd->add_option("--config", args.config_path, "pipeline config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--out", args.out_dir, "run directory");
    cmd->add_option("--seed", args.seed, "override the stage seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

PipelineConfig load_pipeline_config(const CommonArgs& args) {
    PipelineConfig cfg = load_config(args.config_path);
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    if (cfg.out_dir.empty()) throw ValidationError("no run directory (config out_dir or --out)");
    return cfg;
}

void print_stage_summary(const CorpusManifest& m) {
    for (const auto& [name, info] : m.stages) {
        std::cout << name << ": " << info.dump() << "\n";
    }
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, const PipelineConfig& pipeline) {
    ExperimentConfig ec;
    ec.pipeline = pipeline;
    if (!j.contains("eval")) throw ValidationError("config: 'eval' section required for evaluate");
    const auto& e = j["eval"];
    ec.eval.k_shot = e.value("k_shot", 5);
    ec.eval.test_rows = e.value("test_rows", 48);
    ec.eval.masks_per_row = e.value("masks_per_row", 2);
    if (!e.contains("seeds") || !e["seeds"].is_array() || e["seeds"].empty()) {
        throw ValidationError("config: eval.seeds must be a non-empty array");
    }
    for (const auto& s : e["seeds"]) ec.eval.seeds.push_back(s.get<std::uint64_t>());
    if (e.contains("finetune")) {
        const auto& f = e["finetune"];
        ec.eval.finetune_cfg.steps = f.value("steps", 150);
        ec.eval.finetune_cfg.batch_size = f.value("batch_size", 16);
        ec.eval.finetune_cfg.lr = f.value("lr", 1e-3);
    } else {
        ec.eval.finetune_cfg.steps = 150;
        ec.eval.finetune_cfg.batch_size = 16;
        ec.eval.finetune_cfg.lr = 1e-3;
    }
    ec.held_out_count = e.value("held_out", 20);
    if (!e.contains("held_out_seed")) {
        throw ValidationError("config: eval.held_out_seed is mandatory");
    }
    ec.held_out_seed = e["held_out_seed"].get<std::uint64_t>();
    if (e.contains("held_out_noise")) {
        const auto& n = e["held_out_noise"];
        ec.held_out_noise.pmf_concentration =
            n.value("pmf_concentration", ec.held_out_noise.pmf_concentration);
        ec.held_out_noise.mean_jitter = n.value("mean_jitter", ec.held_out_noise.mean_jitter);
        ec.held_out_noise.scale_jitter = n.value("scale_jitter", ec.held_out_noise.scale_jitter);
    }
    return ec;
}

std::vector<std::pair<DatasetContext, Table>> load_data_dir(const std::string& dir) {
    std::vector<std::pair<DatasetContext, Table>> out;
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        auto ctx = parse_context(read_file(p));
        auto report = validate_context(ctx);
        if (!report.empty()) {
            throw ValidationError(p + ": " + report.front().where + ": " + report.front().reason);
        }
        fs::path table_path = fs::path(p).replace_extension(".csv");
        Table table;
        if (fs::exists(table_path)) {
            table = table_from_csv(ctx, read_file(table_path.string()));
        } else {
            table_path = fs::path(p).replace_extension(".jsonl");
            if (!fs::exists(table_path)) {
                throw ValidationError("no table (.csv or .jsonl) next to " + p);
            }
            table = table_from_jsonl(ctx, read_file(table_path.string()));
        }
        auto tr = validate_table(ctx, table);
        if (!tr.empty()) {
            throw ValidationError(table_path.string() + ": row " + std::to_string(tr[0].row) +
                                  " col " + std::to_string(tr[0].column) + ": " + tr[0].reason);
        }
        out.emplace_back(std::move(ctx), std::move(table));
    }
    if (out.empty()) throw ValidationError("no context files in " + dir);
    return out;
}


} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TEXR semi-supervised pipeline for open-world conditional modeling"};
    app.require_subcommand(1);

    CommonArgs run_args, expand_args, inst_args, filter_args, refine_args, cons_args, eval_args;

    auto* run_cmd = app.add_subcommand("run", "execute all pipeline stages");
    add_common(run_cmd, run_args);
    auto* expand_cmd = app.add_subcommand("expand", "topic universe + context generation");
    add_common(expand_cmd, expand_args);
    auto* inst_cmd = app.add_subcommand("instantiate", "bayesian networks + weak tables");
    add_common(inst_cmd, inst_args);
    auto* filter_cmd = app.add_subcommand("filter", "ensemble z-score filtration");
    add_common(filter_cmd, filter_args);
    auto* refine_cmd = app.add_subcommand("refine", "cross or direct value refinement");
    add_common(refine_cmd, refine_args);
    std::string refine_mode;
    refine_cmd->add_option("--mode", refine_mode, "cross|direct");
    auto* cons_cmd = app.add_subcommand("consolidate", "train the unified model");
    add_common(cons_cmd, cons_args);
    auto* eval_cmd = app.add_subcommand("evaluate", "four-arm held-out evaluation");
    add_common(eval_cmd, eval_args);

    std::string export_run, export_out;
    auto* export_cmd = app.add_subcommand("export", "release bundle from a finished run");
    export_cmd->add_option("--run", export_run, "run directory")->required();
    export_cmd->add_option("--out", export_out, "bundle directory")->required();

    std::string verify_dir, verify_run;
    auto* verify_cmd = app.add_subcommand("verify", "re-check integrity hashes");
    verify_cmd->add_option("--export", verify_dir, "exported bundle directory");
    verify_cmd->add_option("--run", verify_run, "run directory (verifies the manifest)");

    std::string train_data, train_out;
    std::uint64_t train_seed = 0;
    int train_steps = 2000, train_batch = 64, train_h = 64, train_width = 64;
    double train_lr = 1e-3;
    auto* train_cmd =
        app.add_subcommand("train", "train a conditional model on context/table files");
    train_cmd->add_option("--data", train_data, "directory of <id>.json + <id>.csv pairs")
        ->required();
    train_cmd->add_option("--out", train_out, "checkpoint path")->required();
    train_cmd->add_option("--seed", train_seed)->required();
    train_cmd->add_option("--steps", train_steps);
    train_cmd->add_option("--batch", train_batch);
    train_cmd->add_option("--lr", train_lr);
    train_cmd->add_option("--text-dim", train_h);
    train_cmd->add_option("--width", train_width);

    std::string predict_model, predict_ctx, predict_observed = "{}", predict_target;
    auto* predict_cmd = app.add_subcommand("predict", "conditional prediction for one target");
    predict_cmd->add_option("--model", predict_model)->required();
    predict_cmd->add_option("--context", predict_ctx)->required();
    predict_cmd->add_option("--observed", predict_observed,
                            "JSON object feature -> value, e.g. '{\"age\": 30}'");
    predict_cmd->add_option("--target", predict_target)->required();

    std::string sample_model, sample_ctx;
    std::uint64_t sample_seed = 0;
    int sample_rows = 1;
    auto* sample_cmd = app.add_subcommand("sample", "autoregressive joint sampling");
    sample_cmd->add_option("--model", sample_model)->required();
    sample_cmd->add_option("--context", sample_ctx)->required();
    sample_cmd->add_option("--seed", sample_seed)->required();
    sample_cmd->add_option("--rows", sample_rows);

    CLI11_PARSE(app, argc, argv);

    try {
        auto staged_run = [&](CommonArgs& args, StageToggles stages,
                              std::uint64_t PipelineSeeds::*seed_field) {
            PipelineConfig cfg = load_pipeline_config(args);
            cfg.stages = stages;
            if (args.seed_set) cfg.seeds.*seed_field = args.seed;
            auto manifest = run_pipeline(cfg);
            print_stage_summary(manifest);
        };

        if (*run_cmd) {
            PipelineConfig cfg = load_pipeline_config(run_args);
            auto manifest = run_pipeline(cfg);
            print_stage_summary(manifest);
        } else if (*expand_cmd) {
            staged_run(expand_args, StageToggles{true, false, false, false, false},
                       &PipelineSeeds::expand);
        } else if (*inst_cmd) {
            staged_run(inst_args, StageToggles{true, true, false, false, false},
                       &PipelineSeeds::instantiate);
        } else if (*filter_cmd) {
            staged_run(filter_args, StageToggles{true, true, true, false, false},
                       &PipelineSeeds::filter);
        } else if (*refine_cmd) {
            PipelineConfig cfg = load_pipeline_config(refine_args);
            cfg.stages = StageToggles{true, true, cfg.stages.filter, true, false};
            if (!refine_mode.empty()) cfg.refine_mode = refine_mode;
            if (refine_args.seed_set) cfg.seeds.refine = refine_args.seed;
            auto manifest = run_pipeline(cfg);
            print_stage_summary(manifest);
        } else if (*cons_cmd) {
            staged_run(cons_args, StageToggles{true, true, true, true, true},
                       &PipelineSeeds::consolidate);
        } else if (*eval_cmd) {
            PipelineConfig cfg = load_pipeline_config(eval_args);
            auto j = nlohmann::json::parse(read_file(eval_args.config_path));
            auto ec = experiment_from_json(j, cfg);
            auto report = run_experiment(ec);
            emit_report(report, cfg.out_dir + "/reports");
            std::cout << report_to_csv(report);
        } else if (*export_cmd) {
            export_corpus(export_run, export_out);
            verify_export(export_out);
            std::cout << "exported and verified: " << export_out << "\n";
        } else if (*verify_cmd) {
            if (verify_dir.empty() && verify_run.empty()) {
                throw ValidationError("verify: pass --export or --run");
            }
            if (!verify_dir.empty()) {
                verify_export(verify_dir);
                std::cout << "export bundle ok: " << verify_dir << "\n";
            }
            if (!verify_run.empty()) {
                auto manifest = load_manifest(verify_run);
                if (!manifest) throw IntegrityError("no manifest under " + verify_run);
                verify_manifest(*manifest, verify_run);
                std::cout << "run manifest ok: " << verify_run << "\n";
            }
        } else if (*train_cmd) {
            auto data = load_data_dir(train_data);
            std::vector<TrainingSet> sets;
            for (const auto& [ctx, table] : data) sets.push_back({&ctx, &table});
            Hyperparams hp;
            hp.text_dim = train_h;
            hp.width = train_width;
            TrainConfig cfg;
            cfg.steps = train_steps;
            cfg.batch_size = train_batch;
            cfg.lr = train_lr;
            auto result = train(sets, hp, cfg, train_seed);
            save_model(result.model, train_out);
            std::cout << "trained " << result.model.param_count() << " parameters in "
                      << cfg.steps << " steps; final loss "
                      << format_double(result.loss_trace.back()) << "\n";
        } else if (*predict_cmd) {
            auto model = load_model(predict_model);
            auto ctx = parse_context(read_file(predict_ctx));
            int target = ctx.feature_index(predict_target);
            if (target < 0) throw ValidationError("unknown target '" + predict_target + "'");
            std::vector<ObservedValue> observed;
            auto obs_json = nlohmann::json::parse(predict_observed);
            for (auto it = obs_json.begin(); it != obs_json.end(); ++it) {
                int f = ctx.feature_index(it.key());
                if (f < 0) throw ValidationError("unknown observed feature '" + it.key() + "'");
                if (it.value().is_number()) {
                    observed.push_back({f, NumberValue{it.value().get<double>()}});
                } else {
                    observed.push_back({f, CategoryValue{it.value().get<std::string>()}});
                }
            }
            auto dist = predict(model, ctx, observed, target);
            nlohmann::json out;
            if (const auto* mog = std::get_if<MixtureOfGaussians>(&dist)) {
                out["kind"] = "mixture_of_gaussians";
                out["weights"] = mog->weights;
                out["means"] = mog->means;
                out["vars"] = mog->vars;
                out["mean"] = mog->mean();
                out["stddev"] = mog->stddev();
            } else {
                const auto& pmf = std::get<CategoricalPmf>(dist);
                out["kind"] = "categorical";
                out["probs"] = pmf.probs;
                const auto& cats =
                    std::get<DiscreteKind>(ctx.features[static_cast<size_t>(target)].kind)
                        .categories;
                out["categories"] = cats;
            }
            std::cout << out.dump(2) << "\n";
        } else if (*sample_cmd) {
            auto model = load_model(sample_model);
            auto ctx = parse_context(read_file(sample_ctx));
            auto enc = encode_context(model.hp(), ctx);
            Table t;
            t.context_id = ctx.id;
            std::vector<int> perm(ctx.features.size());
            std::iota(perm.begin(), perm.end(), 0);
            for (int r = 0; r < sample_rows; ++r) {
                t.rows.push_back(
                    sample_joint(model, enc, perm, mix_seed(sample_seed, static_cast<std::uint64_t>(r))));
            }
            std::cout << table_to_csv(ctx, t);
        }
        return static_cast<int>(ExitCode::Ok);
    } catch (const ContaminationError& e) {
        std::cerr << "contamination: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Integrity);
    } catch (const IntegrityError& e) {
        std::cerr << "integrity: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Integrity);
    } catch (const BackendError& e) {
        std::cerr << "backend: " << e.what();
        if (!e.prompt_hash().empty()) std::cerr << " (prompt " << e.prompt_hash() << ")";
        std::cerr << "\n";
        return static_cast<int>(ExitCode::Backend);
    } catch (const ValidationError& e) {
        std::cerr << "invalid: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Validation);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::Failure);
    }
}
