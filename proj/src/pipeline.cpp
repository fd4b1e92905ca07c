#include "texr/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "texr/archetypes.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- Config ------------------------------------------------------------------

namespace {

json train_cfg_to_json(const TrainConfig& c) {
    return json{{"steps", c.steps},   {"batch_size", c.batch_size}, {"lr", c.lr},
                {"beta1", c.beta1},   {"beta2", c.beta2},           {"adam_eps", c.adam_eps}};
}

TrainConfig train_cfg_from_json(const json& j, TrainConfig base = {}) {
    base.steps = j.value("steps", base.steps);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.lr = j.value("lr", base.lr);
    base.beta1 = j.value("beta1", base.beta1);
    base.beta2 = j.value("beta2", base.beta2);
    base.adam_eps = j.value("adam_eps", base.adam_eps);
    return base;
}

json noise_to_json(const BnNoise& n) {
    return json{{"pmf_concentration", n.pmf_concentration},
                {"mean_jitter", n.mean_jitter},
                {"scale_jitter", n.scale_jitter},
                {"parent_cap", n.parent_cap}};
}

BnNoise noise_from_json(const json& j, BnNoise base = {}) {
    base.pmf_concentration = j.value("pmf_concentration", base.pmf_concentration);
    base.mean_jitter = j.value("mean_jitter", base.mean_jitter);
    base.scale_jitter = j.value("scale_jitter", base.scale_jitter);
    base.parent_cap = j.value("parent_cap", base.parent_cap);
    return base;
}

} // namespace

json config_to_json(const PipelineConfig& cfg) {
    json j;
    j["budget"] = {{"categories", cfg.budget.n_categories},
                   {"domains_per_category", cfg.budget.domains_per_category},
                   {"topics_per_domain", cfg.budget.topics_per_domain},
                   {"contexts_per_topic", cfg.budget.contexts_per_topic},
                   {"rows_per_dataset", cfg.budget.rows_per_dataset}};
    j["backend"] = {{"kind", cfg.backend.kind},
                    {"url", cfg.backend.url},
                    {"model", cfg.backend.model},
                    {"token_env", cfg.backend.token_env},
                    {"replay_dir", cfg.backend.replay_dir},
                    {"record_dir", cfg.backend.record_dir},
                    {"allow_fallback", cfg.backend.allow_fallback},
                    {"procedural",
                     {{"pmf_concentration", cfg.backend.procedural.pmf_concentration},
                      {"mean_jitter", cfg.backend.procedural.mean_jitter},
                      {"parent_cap", cfg.backend.procedural.parent_cap}}}};
    j["real"] = {{"dir", cfg.real.dir},
                 {"pool_count", cfg.real.pool_count},
                 {"pool_rows", cfg.real.pool_rows},
                 {"pool_seed", cfg.real.pool_seed},
                 {"pool_noise", noise_to_json(cfg.real.pool_noise)}};
    j["decode"] = {{"temperature", cfg.decode.temperature},
                   {"top_p", cfg.decode.top_p},
                   {"max_new_tokens", cfg.decode.max_new_tokens}};
    j["filter"] = {{"retain_fraction", cfg.retain_fraction}, {"row_cap", cfg.filter_row_cap}};
    j["model"] = {{"text_dim", cfg.hp.text_dim}, {"fourier", cfg.hp.fourier},
                  {"mixture", cfg.hp.mixture},   {"width", cfg.hp.width},
                  {"var_floor", cfg.hp.var_floor}, {"temp_init", cfg.hp.temp_init}};
    j["train_full"] = train_cfg_to_json(cfg.train_full);
    j["train_side"] = train_cfg_to_json(cfg.train_side);
    j["train_ensemble"] = train_cfg_to_json(cfg.train_ensemble);
    j["refine"] = {{"mode", cfg.refine_mode}, {"rounds", cfg.refine_rounds}};
    j["consolidate"] = {{"protocol", cfg.consolidate_protocol}};
    j["stages"] = {{"expand", cfg.stages.expand},
                   {"instantiate", cfg.stages.instantiate},
                   {"filter", cfg.stages.filter},
                   {"refine", cfg.stages.refine},
                   {"consolidate", cfg.stages.consolidate}};
    j["seeds"] = {{"expand", cfg.seeds.expand},
                  {"instantiate", cfg.seeds.instantiate},
                  {"filter", cfg.seeds.filter},
                  {"refine", cfg.seeds.refine},
                  {"consolidate", cfg.seeds.consolidate}};
    j["out_dir"] = cfg.out_dir;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    PipelineConfig cfg;
    if (j.contains("budget")) {
        const auto& b = j["budget"];
        cfg.budget.n_categories = b.value("categories", cfg.budget.n_categories);
        cfg.budget.domains_per_category =
            b.value("domains_per_category", cfg.budget.domains_per_category);
        cfg.budget.topics_per_domain = b.value("topics_per_domain", cfg.budget.topics_per_domain);
        cfg.budget.contexts_per_topic =
            b.value("contexts_per_topic", cfg.budget.contexts_per_topic);
        cfg.budget.rows_per_dataset = b.value("rows_per_dataset", cfg.budget.rows_per_dataset);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        cfg.backend.kind = b.value("kind", cfg.backend.kind);
        cfg.backend.url = b.value("url", cfg.backend.url);
        cfg.backend.model = b.value("model", cfg.backend.model);
        cfg.backend.token_env = b.value("token_env", cfg.backend.token_env);
        cfg.backend.replay_dir = b.value("replay_dir", cfg.backend.replay_dir);
        cfg.backend.record_dir = b.value("record_dir", cfg.backend.record_dir);
        cfg.backend.allow_fallback = b.value("allow_fallback", cfg.backend.allow_fallback);
        if (b.contains("procedural")) {
            const auto& p = b["procedural"];
            cfg.backend.procedural.pmf_concentration =
                p.value("pmf_concentration", cfg.backend.procedural.pmf_concentration);
            cfg.backend.procedural.mean_jitter =
                p.value("mean_jitter", cfg.backend.procedural.mean_jitter);
            cfg.backend.procedural.parent_cap =
                p.value("parent_cap", cfg.backend.procedural.parent_cap);
        }
    }
    if (j.contains("real")) {
        const auto& r = j["real"];
        cfg.real.dir = r.value("dir", cfg.real.dir);
        cfg.real.pool_count = r.value("pool_count", cfg.real.pool_count);
        cfg.real.pool_rows = r.value("pool_rows", cfg.real.pool_rows);
        cfg.real.pool_seed = r.value("pool_seed", cfg.real.pool_seed);
        if (r.contains("pool_noise")) {
            cfg.real.pool_noise = noise_from_json(r["pool_noise"], cfg.real.pool_noise);
        }
    }
    if (j.contains("decode")) {
        const auto& d = j["decode"];
        cfg.decode.temperature = d.value("temperature", cfg.decode.temperature);
        cfg.decode.top_p = d.value("top_p", cfg.decode.top_p);
        cfg.decode.max_new_tokens = d.value("max_new_tokens", cfg.decode.max_new_tokens);
    }
    if (j.contains("filter")) {
        cfg.retain_fraction = j["filter"].value("retain_fraction", cfg.retain_fraction);
        cfg.filter_row_cap = j["filter"].value("row_cap", cfg.filter_row_cap);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        cfg.hp.text_dim = m.value("text_dim", cfg.hp.text_dim);
        cfg.hp.fourier = m.value("fourier", cfg.hp.fourier);
        cfg.hp.mixture = m.value("mixture", cfg.hp.mixture);
        cfg.hp.width = m.value("width", cfg.hp.width);
        cfg.hp.var_floor = m.value("var_floor", cfg.hp.var_floor);
        cfg.hp.temp_init = m.value("temp_init", cfg.hp.temp_init);
    }
    if (j.contains("train_full")) cfg.train_full = train_cfg_from_json(j["train_full"]);
    if (j.contains("train_side")) {
        cfg.train_side = train_cfg_from_json(j["train_side"]);
    } else {
        cfg.train_side = cfg.train_full;
        cfg.train_side.steps = std::max(1, cfg.train_full.steps / 2);
    }
    if (j.contains("train_ensemble")) {
        cfg.train_ensemble = train_cfg_from_json(j["train_ensemble"]);
    } else {
        cfg.train_ensemble = cfg.train_full;
        cfg.train_ensemble.steps = std::max(1, cfg.train_full.steps / 2);
    }
    if (j.contains("refine")) {
        cfg.refine_mode = j["refine"].value("mode", cfg.refine_mode);
        cfg.refine_rounds = j["refine"].value("rounds", cfg.refine_rounds);
    }
    if (j.contains("consolidate")) {
        cfg.consolidate_protocol = j["consolidate"].value("protocol", cfg.consolidate_protocol);
    }
    if (j.contains("stages")) {
        const auto& s = j["stages"];
        cfg.stages.expand = s.value("expand", true);
        cfg.stages.instantiate = s.value("instantiate", true);
        cfg.stages.filter = s.value("filter", true);
        cfg.stages.refine = s.value("refine", true);
        cfg.stages.consolidate = s.value("consolidate", true);
    }
    if (!j.contains("seeds")) {
        throw ValidationError("config: 'seeds' section is mandatory (no wall-clock defaults)");
    }
    const auto& s = j["seeds"];
    for (const char* key : {"expand", "instantiate", "filter", "refine", "consolidate"}) {
        if (!s.contains(key)) {
            throw ValidationError(std::string("config: seeds.") + key + " is mandatory");
        }
    }
    cfg.seeds.expand = s["expand"].get<std::uint64_t>();
    cfg.seeds.instantiate = s["instantiate"].get<std::uint64_t>();
    cfg.seeds.filter = s["filter"].get<std::uint64_t>();
    cfg.seeds.refine = s["refine"].get<std::uint64_t>();
    cfg.seeds.consolidate = s["consolidate"].get<std::uint64_t>();
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("config parse error: " + std::string(e.what()));
    }
    return config_from_json(j);
}

std::string config_hash(const PipelineConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("out_dir");
    return sha256_hex(j.dump());
}

// ---- Manifest ------------------------------------------------------------------

namespace {

json file_record_to_json(const FileRecord& f) {
    return json{{"path", f.path}, {"sha256", f.sha256}};
}

FileRecord file_record_from_json(const json& j) {
    return FileRecord{j.at("path").get<std::string>(), j.at("sha256").get<std::string>()};
}

} // namespace

bool CorpusManifest::stage_complete(const std::string& name) const {
    auto it = stages.find(name);
    return it != stages.end() && it->second.value("complete", false);
}

json manifest_to_json(const CorpusManifest& m) {
    json j;
    j["config_hash"] = m.config_hash;
    j["stages"] = json::object();
    for (const auto& [name, info] : m.stages) j["stages"][name] = info;
    j["datasets"] = json::array();
    for (const auto& d : m.datasets) {
        json e;
        e["id"] = d.id;
        e["context_hash"] = d.context_hash;
        e["topic_key"] = d.topic_key;
        e["lineage"] = d.lineage;
        e["backend_id"] = d.backend_id;
        e["fallback"] = d.fallback;
        e["slot_seed"] = d.slot_seed;
        e["retained"] = d.retained;
        e["filter_score"] = d.filter_score;
        e["files"] = json::object();
        for (const auto& [k, f] : d.files) e["files"][k] = file_record_to_json(f);
        j["datasets"].push_back(e);
    }
    j["splits"] = json::object();
    for (const auto& [name, info] : m.splits) j["splits"][name] = info;
    j["checkpoints"] = json::object();
    for (const auto& [name, f] : m.checkpoints) j["checkpoints"][name] = file_record_to_json(f);
    j["real_data"] = json::object();
    for (const auto& [name, f] : m.real_data) j["real_data"][name] = file_record_to_json(f);
    return j;
}

CorpusManifest manifest_from_json(const json& j) {
    CorpusManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    for (auto it = j.at("stages").begin(); it != j.at("stages").end(); ++it) {
        m.stages[it.key()] = it.value();
    }
    for (const auto& e : j.at("datasets")) {
        DatasetRecord d;
        d.id = e.at("id").get<std::string>();
        d.context_hash = e.at("context_hash").get<std::string>();
        d.topic_key = e.value("topic_key", "");
        d.lineage = e.at("lineage").get<std::vector<std::string>>();
        d.backend_id = e.value("backend_id", "");
        d.fallback = e.value("fallback", false);
        d.slot_seed = e.value("slot_seed", std::uint64_t{0});
        d.retained = e.value("retained", true);
        d.filter_score = e.value("filter_score", 0.0);
        if (e.contains("files")) {
            for (auto it = e["files"].begin(); it != e["files"].end(); ++it) {
                d.files[it.key()] = file_record_from_json(it.value());
            }
        }
        m.datasets.push_back(std::move(d));
    }
    if (j.contains("splits")) {
        for (auto it = j["splits"].begin(); it != j["splits"].end(); ++it) {
            m.splits[it.key()] = it.value();
        }
    }
    if (j.contains("checkpoints")) {
        for (auto it = j["checkpoints"].begin(); it != j["checkpoints"].end(); ++it) {
            m.checkpoints[it.key()] = file_record_from_json(it.value());
        }
    }
    if (j.contains("real_data")) {
        for (auto it = j["real_data"].begin(); it != j["real_data"].end(); ++it) {
            m.real_data[it.key()] = file_record_from_json(it.value());
        }
    }
    return m;
}

void save_manifest(const CorpusManifest& m, const std::string& run_dir) {
    const std::string tmp = run_dir + "/manifest.json.tmp";
    write_file(tmp, manifest_to_json(m).dump(2) + "\n");
    fs::rename(tmp, run_dir + "/manifest.json");
}

std::optional<CorpusManifest> load_manifest(const std::string& run_dir) {
    const std::string path = run_dir + "/manifest.json";
    if (!fs::exists(path)) return std::nullopt;
    return manifest_from_json(json::parse(read_file(path)));
}

// ---- DGP pool ------------------------------------------------------------------

std::vector<GroundTruthDgp> make_dgp_pool(int count, std::uint64_t seed, const BnNoise& noise) {
    std::vector<GroundTruthDgp> pool;
    std::set<std::string> seen;
    Rng rng(mix_seed(seed, "dgp_pool"));
    std::uint64_t bump = 0;
    while (static_cast<int>(pool.size()) < count) {
        GroundTruthDgp dgp;
        const auto& cats = category_pool();
        const auto& domains = domain_word_pool();
        const auto& scenarios = scenario_pool();
        dgp.topic = Topic{cats[rng.uniform_int(cats.size())],
                          domains[rng.uniform_int(domains.size())],
                          scenarios[rng.uniform_int(scenarios.size())]};
        const std::uint64_t ctx_seed = mix_seed(seed, "dgp_ctx", pool.size() + bump);
        dgp.ctx = procedural_generate(dgp.topic, ctx_seed);
        if (!seen.insert(context_content_hash(dgp.ctx)).second) {
            ++bump; // duplicate draw, take the next seed
            continue;
        }
        dgp.bn = procedural_bn(dgp.ctx, mix_seed(seed, "dgp_bn", pool.size() + bump), noise);
        pool.push_back(std::move(dgp));
    }
    return pool;
}

// ---- Pipeline ------------------------------------------------------------------

namespace {

std::unique_ptr<TextGenBackend> make_backend(const BackendSettings& s) {
    if (s.kind == "procedural") return std::make_unique<ProceduralBackend>(s.procedural);
    if (s.kind == "replay") {
        if (s.replay_dir.empty()) throw ValidationError("replay backend needs replay_dir");
        return std::make_unique<ReplayBackend>(s.replay_dir);
    }
    if (s.kind == "remote") {
        HttpBackend::Config cfg;
        cfg.url = s.url;
        cfg.model = s.model;
        cfg.token_env = s.token_env;
        cfg.record_dir = s.record_dir;
        return std::make_unique<HttpBackend>(cfg);
    }
    throw ValidationError("unknown backend kind '" + s.kind + "'");
}

FileRecord write_tracked(const std::string& run_dir, const std::string& rel,
                         const std::string& contents) {
    const std::string full = run_dir + "/" + rel;
    fs::create_directories(fs::path(full).parent_path());
    write_file(full, contents);
    return FileRecord{rel, sha256_hex(contents)};
}

DatasetRecord* find_dataset(CorpusManifest& m, const std::string& id) {
    for (auto& d : m.datasets) {
        if (d.id == id) return &d;
    }
    return nullptr;
}

json slot_log_summary(const GenerationLog& log) {
    int total = 0, retried = 0, fallbacks = 0;
    for (const auto& rec : log) {
        ++total;
        if (rec.attempts > 1 && !rec.fallback) ++retried;
        if (rec.fallback) ++fallbacks;
    }
    return json{{"slots", total}, {"retried", retried}, {"fallbacks", fallbacks}};
}

struct PipelineState {
    std::vector<DatasetContext> real_contexts;
    std::vector<Table> real_tables;
    std::vector<DatasetContext> synth_contexts; // generation order
    std::vector<BayesNetSpec> bns;              // aligned
    std::vector<Table> weak_tables;             // aligned
    std::vector<size_t> retained;               // indices into synth
    std::vector<Table> refined_tables;          // aligned with retained
};

std::vector<TrainingSet> to_sets(const std::vector<DatasetContext>& ctxs,
                                 const std::vector<Table>& tabs) {
    std::vector<TrainingSet> out;
    for (size_t i = 0; i < ctxs.size(); ++i) out.push_back({&ctxs[i], &tabs[i]});
    return out;
}

} // namespace

CorpusManifest run_pipeline(const PipelineConfig& cfg) {
    if (cfg.out_dir.empty()) throw ValidationError("run_pipeline: out_dir is required");
    if (!cfg.budget.valid()) throw ValidationError("run_pipeline: invalid expansion budget");
    const std::string run_dir = cfg.out_dir;
    fs::create_directories(run_dir);

    const std::string chash = config_hash(cfg);
    CorpusManifest m;
    if (auto existing = load_manifest(run_dir); existing && existing->config_hash == chash) {
        m = std::move(*existing);
    } else {
        m.config_hash = chash;
    }

    auto backend = make_backend(cfg.backend);
    PipelineState st;

    // ---- real data -----------------------------------------------------------
    if (cfg.real.use_pool()) {
        auto pool = make_dgp_pool(cfg.real.pool_count, cfg.real.pool_seed, cfg.real.pool_noise);
        for (size_t i = 0; i < pool.size(); ++i) {
            st.real_contexts.push_back(pool[i].ctx);
            st.real_tables.push_back(sample_table(pool[i].bn, pool[i].ctx,
                                                  static_cast<size_t>(cfg.real.pool_rows),
                                                  mix_seed(cfg.real.pool_seed, "table", i)));
        }
    } else {
        for (const auto& entry : fs::directory_iterator(cfg.real.dir)) {
            if (entry.path().extension() != ".json") continue;
            auto ctx = parse_context(read_file(entry.path().string()));
            auto csv = entry.path();
            csv.replace_extension(".csv");
            if (!fs::exists(csv)) {
                throw ValidationError("real dataset missing table: " + csv.string());
            }
            st.real_contexts.push_back(std::move(ctx));
            st.real_tables.push_back(
                table_from_csv(st.real_contexts.back(), read_file(csv.string())));
        }
        if (st.real_contexts.empty()) {
            throw ValidationError("real data dir has no contexts: " + cfg.real.dir);
        }
    }
    if (!m.stage_complete("real")) {
        for (size_t i = 0; i < st.real_contexts.size(); ++i) {
            const auto& ctx = st.real_contexts[i];
            m.real_data["ctx:" + ctx.id] =
                write_tracked(run_dir, "real/" + ctx.id + ".json", serialize_context(ctx));
            m.real_data["table:" + ctx.id] = write_tracked(
                run_dir, "real/" + ctx.id + ".csv", table_to_csv(ctx, st.real_tables[i]));
        }
        m.stages["real"] = json{{"complete", true}, {"count", st.real_contexts.size()}};
        save_manifest(m, run_dir);
    }

    // ---- expand ----------------------------------------------------------------
    if (cfg.stages.expand && !m.stage_complete("expand")) {
        auto universe = build_topic_universe(*backend, cfg.budget, cfg.seeds.expand,
                                             cfg.backend.allow_fallback);
        auto corpus = generate_contexts(*backend, universe.topics, cfg.budget, cfg.seeds.expand,
                                        cfg.backend.allow_fallback);
        m.datasets.clear();
        for (const auto& gc : corpus.contexts) {
            DatasetRecord rec;
            rec.id = gc.ctx.id;
            rec.context_hash = context_content_hash(gc.ctx);
            rec.topic_key = gc.topic.key();
            rec.lineage = {"expanded"};
            rec.backend_id = gc.fallback ? "procedural" : backend->backend_id();
            rec.fallback = gc.fallback;
            rec.slot_seed = gc.slot_seed;
            rec.files["context"] = write_tracked(run_dir, "contexts/" + gc.ctx.id + ".json",
                                                 serialize_context(gc.ctx));
            m.datasets.push_back(std::move(rec));
            st.synth_contexts.push_back(gc.ctx);
        }
        GenerationLog all_log = universe.log;
        all_log.insert(all_log.end(), corpus.log.begin(), corpus.log.end());
        m.stages["expand"] = json{{"complete", true},
                                  {"seed", cfg.seeds.expand},
                                  {"backend_id", backend->backend_id()},
                                  {"topics", universe.topics.size()},
                                  {"contexts", corpus.contexts.size()},
                                  {"dedup_drops", corpus.dedup_dropped.size()},
                                  {"generation", slot_log_summary(all_log)}};
        save_manifest(m, run_dir);
    } else if (cfg.stages.expand) {
        for (const auto& rec : m.datasets) {
            st.synth_contexts.push_back(
                parse_context(read_file(run_dir + "/" + rec.files.at("context").path)));
        }
    }

    // ---- instantiate -----------------------------------------------------------
    if (cfg.stages.instantiate && !m.stage_complete("instantiate")) {
        GenerationLog log;
        size_t rejected_edges = 0;
        for (size_t i = 0; i < st.synth_contexts.size(); ++i) {
            const auto& ctx = st.synth_contexts[i];
            BnGenConfig bn_cfg;
            bn_cfg.allow_procedural_fallback = cfg.backend.allow_fallback;
            bn_cfg.fallback_params = cfg.backend.procedural;
            auto gen = generate_bn(*backend, ctx, mix_seed(cfg.seeds.instantiate, ctx.id), bn_cfg);
            auto table = sample_table(gen.bn, ctx, static_cast<size_t>(cfg.budget.rows_per_dataset),
                                      mix_seed(cfg.seeds.instantiate, "rows", i));
            auto* rec = find_dataset(m, ctx.id);
            rec->lineage.push_back("instantiated");
            rec->files["bn"] = write_tracked(run_dir, "bn/" + ctx.id + ".json",
                                             bn_to_json(gen.bn, ctx).dump(2) + "\n");
            rec->files["table_weak"] =
                write_tracked(run_dir, "weak/" + ctx.id + ".csv", table_to_csv(ctx, table));
            log.insert(log.end(), gen.log.begin(), gen.log.end());
            rejected_edges += gen.rejected_edges.size();
            st.bns.push_back(std::move(gen.bn));
            st.weak_tables.push_back(std::move(table));
        }
        m.stages["instantiate"] = json{{"complete", true},
                                       {"seed", cfg.seeds.instantiate},
                                       {"rows_per_dataset", cfg.budget.rows_per_dataset},
                                       {"rejected_edges", rejected_edges},
                                       {"generation", slot_log_summary(log)}};
        save_manifest(m, run_dir);
    } else if (cfg.stages.instantiate) {
        for (size_t i = 0; i < st.synth_contexts.size(); ++i) {
            const auto& ctx = st.synth_contexts[i];
            const auto& rec = *find_dataset(m, ctx.id);
            st.bns.push_back(
                bn_from_json(json::parse(read_file(run_dir + "/" + rec.files.at("bn").path)), ctx));
            st.weak_tables.push_back(
                table_from_csv(ctx, read_file(run_dir + "/" + rec.files.at("table_weak").path)));
        }
    }

    // ---- filter ----------------------------------------------------------------
    if (cfg.stages.filter && !m.stage_complete("filter")) {
        auto ens = train_ensemble(to_sets(st.real_contexts, st.real_tables), cfg.hp,
                                  cfg.train_ensemble, cfg.seeds.filter);
        FilterConfig fc;
        fc.retain_fraction = cfg.retain_fraction;
        fc.row_cap = cfg.filter_row_cap;
        fc.subsample_seed = cfg.seeds.filter;
        auto result = filter_corpus(ens, to_sets(st.synth_contexts, st.weak_tables), fc);
        st.retained = result.retained;
        std::sort(st.retained.begin(), st.retained.end());
        for (const auto& rep : result.reports) {
            auto* rec = find_dataset(m, rep.dataset_id);
            rec->retained = rep.retained;
            rec->filter_score = rep.dataset_score;
            if (rep.retained) rec->lineage.push_back("filtered");
        }
        write_tracked(run_dir, "reports/filter.jsonl", reports_to_jsonl(result.reports));
        m.splits["filtration"] =
            json{{"side1", ens.side1_ids}, {"side2", ens.side2_ids}, {"seed", cfg.seeds.filter}};
        m.stages["filter"] = json{{"complete", true},
                                  {"seed", cfg.seeds.filter},
                                  {"retain_fraction", cfg.retain_fraction},
                                  {"retained", st.retained.size()},
                                  {"dropped", result.dropped.size()}};
        save_manifest(m, run_dir);
    } else if (cfg.stages.filter) {
        for (size_t i = 0; i < st.synth_contexts.size(); ++i) {
            if (find_dataset(m, st.synth_contexts[i].id)->retained) st.retained.push_back(i);
        }
    } else {
        // Ablation wiring: no filter stage, everything flows through.
        for (size_t i = 0; i < st.synth_contexts.size(); ++i) st.retained.push_back(i);
    }

    // ---- refine ----------------------------------------------------------------
    if (cfg.stages.refine && !m.stage_complete("refine")) {
        std::vector<DatasetContext> kept_ctx;
        std::vector<Table> kept_weak;
        for (size_t i : st.retained) {
            kept_ctx.push_back(st.synth_contexts[i]);
            kept_weak.push_back(st.weak_tables[i]);
        }
        std::vector<std::string> real_ids, synth_ids;
        for (const auto& c : st.real_contexts) real_ids.push_back(c.id);
        for (const auto& c : kept_ctx) synth_ids.push_back(c.id);

        RefineConfig rc;
        rc.hp = cfg.hp;
        rc.side_train = cfg.train_side;
        rc.rounds = cfg.refine_rounds;

        RefinedCorpus refined;
        auto real_sets = to_sets(st.real_contexts, st.real_tables);
        auto weak_sets = to_sets(kept_ctx, kept_weak);
        if (cfg.refine_mode == "cross") {
            auto split = make_split(real_ids, synth_ids, mix_seed(cfg.seeds.refine, "split"));
            refined = cross_refine(real_sets, weak_sets, split, rc, cfg.seeds.refine);
            json assignment = json::object();
            for (const auto& [id, side] : split.assignment) assignment[id] = side;
            m.splits["refinement"] = json{{"seed", split.seed}, {"assignment", assignment}};
        } else if (cfg.refine_mode == "direct") {
            refined = direct_refine(real_sets, weak_sets, rc, cfg.seeds.refine);
        } else {
            throw ValidationError("unknown refine mode '" + cfg.refine_mode + "'");
        }

        st.refined_tables.clear();
        for (size_t k = 0; k < refined.tables.size(); ++k) {
            const auto& rt = refined.tables[k];
            const auto& ctx = kept_ctx[k];
            auto* rec = find_dataset(m, rt.context_id);
            rec->lineage.push_back("refined");
            rec->files["table_refined"] = write_tracked(run_dir, "refined/" + rt.context_id + ".csv",
                                                        table_to_csv(ctx, rt.table));
            st.refined_tables.push_back(rt.table);
        }
        m.stages["refine"] = json{{"complete", true},
                                  {"seed", cfg.seeds.refine},
                                  {"mode", refined.mode},
                                  {"rounds", cfg.refine_rounds},
                                  {"tables", refined.tables.size()}};
        save_manifest(m, run_dir);
    } else if (cfg.stages.refine) {
        for (size_t i : st.retained) {
            const auto& ctx = st.synth_contexts[i];
            const auto& rec = *find_dataset(m, ctx.id);
            st.refined_tables.push_back(
                table_from_csv(ctx, read_file(run_dir + "/" + rec.files.at("table_refined").path)));
        }
    }

    // ---- consolidate -----------------------------------------------------------
    if (cfg.stages.consolidate && !m.stage_complete("consolidate")) {
        std::vector<DatasetContext> kept_ctx;
        for (size_t i : st.retained) kept_ctx.push_back(st.synth_contexts[i]);
        std::vector<Table> synth_tables;
        if (cfg.stages.refine) {
            synth_tables = st.refined_tables;
        } else {
            for (size_t i : st.retained) synth_tables.push_back(st.weak_tables[i]);
        }
        auto protocol = cfg.consolidate_protocol == "pretrain_continue"
                            ? ConsolidateProtocol::PretrainContinue
                            : ConsolidateProtocol::Joint;
        auto p_full = consolidate(to_sets(st.real_contexts, st.real_tables),
                                  to_sets(kept_ctx, synth_tables), cfg.hp, cfg.train_full,
                                  cfg.seeds.consolidate, protocol);
        p_full.set_manifest_hash(m.config_hash);
        const std::string bytes = serialize_model(p_full);
        m.checkpoints["p_full"] = write_tracked(run_dir, "checkpoints/p_full.ckpt", bytes);
        m.stages["consolidate"] = json{{"complete", true},
                                       {"seed", cfg.seeds.consolidate},
                                       {"protocol", cfg.consolidate_protocol},
                                       {"params", p_full.param_count()}};
        save_manifest(m, run_dir);
    }

    return m;
}

void verify_manifest(const CorpusManifest& m, const std::string& run_dir) {
    auto check = [&](const FileRecord& f) {
        const std::string full = run_dir + "/" + f.path;
        if (!fs::exists(full)) throw IntegrityError("missing file: " + f.path);
        if (sha256_file(full) != f.sha256) throw IntegrityError("hash mismatch: " + f.path);
    };
    for (const auto& [k, f] : m.real_data) check(f);
    for (const auto& d : m.datasets) {
        for (const auto& [k, f] : d.files) check(f);
    }
    for (const auto& [k, f] : m.checkpoints) check(f);
}

// ---- Export ------------------------------------------------------------------

void export_corpus(const std::string& run_dir, const std::string& export_dir) {
    auto manifest = load_manifest(run_dir);
    if (!manifest) throw ValidationError("export: no manifest under " + run_dir);
    if (!manifest->stage_complete("refine")) {
        throw ValidationError("export: manifest is not complete through refinement");
    }
    verify_manifest(*manifest, run_dir); // hash mismatch aborts export

    fs::create_directories(export_dir + "/contexts");
    fs::create_directories(export_dir + "/tables");

    json provenance = json::object();
    provenance["config_hash"] = manifest->config_hash;
    provenance["datasets"] = json::array();
    json checksums = json::object();

    auto copy_tracked = [&](const FileRecord& f, const std::string& rel) {
        const std::string contents = read_file(run_dir + "/" + f.path);
        write_file(export_dir + "/" + rel, contents);
        checksums[rel] = sha256_hex(contents);
    };

    for (const auto& d : manifest->datasets) {
        if (!d.retained || !d.has_stage("refined")) continue;
        copy_tracked(d.files.at("context"), "contexts/" + d.id + ".json");
        copy_tracked(d.files.at("table_refined"), "tables/" + d.id + ".csv");
        json e;
        e["id"] = d.id;
        e["context_hash"] = d.context_hash;
        e["topic_key"] = d.topic_key;
        e["lineage"] = d.lineage;
        e["backend_id"] = d.backend_id;
        e["fallback"] = d.fallback;
        e["slot_seed"] = d.slot_seed;
        e["table_format"] = "csv";
        provenance["datasets"].push_back(e);
    }
    {
        const std::string body = provenance.dump(2) + "\n";
        write_file(export_dir + "/provenance.json", body);
        checksums["provenance.json"] = sha256_hex(body);
    }
    write_file(export_dir + "/checksums.json", checksums.dump(2) + "\n");
}

void verify_export(const std::string& export_dir) {
    const std::string path = export_dir + "/checksums.json";
    if (!fs::exists(path)) throw IntegrityError("verify: missing checksums.json");
    json checksums = json::parse(read_file(path));
    for (auto it = checksums.begin(); it != checksums.end(); ++it) {
        const std::string full = export_dir + "/" + it.key();
        if (!fs::exists(full)) throw IntegrityError("verify: missing file " + it.key());
        if (sha256_file(full) != it.value().get<std::string>()) {
            throw IntegrityError("verify: hash mismatch on " + it.key());
        }
    }
}

PipelineArtifacts load_artifacts(const PipelineConfig& cfg, const CorpusManifest& m) {
    PipelineArtifacts art;
    const std::string run_dir = cfg.out_dir;
    if (cfg.real.use_pool()) {
        art.real_pool = make_dgp_pool(cfg.real.pool_count, cfg.real.pool_seed, cfg.real.pool_noise);
    }
    for (const auto& [key, f] : m.real_data) {
        if (key.rfind("ctx:", 0) == 0) {
            art.real_contexts.push_back(parse_context(read_file(run_dir + "/" + f.path)));
        }
    }
    for (const auto& ctx : art.real_contexts) {
        art.real_tables.push_back(
            table_from_csv(ctx, read_file(run_dir + "/" + m.real_data.at("table:" + ctx.id).path)));
    }
    for (const auto& rec : m.datasets) {
        auto ctx = parse_context(read_file(run_dir + "/" + rec.files.at("context").path));
        if (rec.files.count("table_weak")) {
            art.weak_tables.push_back(
                table_from_csv(ctx, read_file(run_dir + "/" + rec.files.at("table_weak").path)));
        }
        art.synth_contexts.push_back(std::move(ctx));
    }
    for (size_t i = 0; i < m.datasets.size(); ++i) {
        const auto& rec = m.datasets[i];
        if (rec.retained && rec.files.count("table_refined")) {
            art.retained.push_back(i);
            art.refined_tables.push_back(table_from_csv(
                art.synth_contexts[i], read_file(run_dir + "/" + rec.files.at("table_refined").path)));
        }
    }
    if (m.checkpoints.count("p_full")) {
        art.p_full = load_model(run_dir + "/" + m.checkpoints.at("p_full").path);
    }
    return art;
}

} // namespace texr
