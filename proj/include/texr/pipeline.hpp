#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "texr/bayes_net.hpp"
#include "texr/expansion.hpp"
#include "texr/filtration.hpp"
#include "texr/model.hpp"
#include "texr/refinement.hpp"
#include "texr/text_backend.hpp"
#include "texr/train.hpp"
#include "texr/types.hpp"

namespace texr {

struct StageToggles {
    bool expand = true;
    bool instantiate = true;
    bool filter = true;
    bool refine = true;
    bool consolidate = true;
};

struct BackendSettings {
    std::string kind = "procedural"; // procedural | replay | remote
    std::string url;
    std::string model;
    std::string token_env = "TEXR_API_TOKEN";
    std::string replay_dir;
    std::string record_dir;
    ProceduralBackend::Params procedural{};
    bool allow_fallback = true;
};

// Desk-scale real data: tables sampled from a designated pool of
// ground-truth networks; alternatively a directory of context/table files.
struct RealDataSettings {
    std::string dir;
    int pool_count = 6;
    int pool_rows = 160;
    std::uint64_t pool_seed = 101;
    BnNoise pool_noise{};
    bool use_pool() const { return dir.empty(); }
};

struct PipelineSeeds {
    std::uint64_t expand = 1;
    std::uint64_t instantiate = 2;
    std::uint64_t filter = 3;
    std::uint64_t refine = 4;
    std::uint64_t consolidate = 5;
};

struct PipelineConfig {
    ExpansionBudget budget;
    BackendSettings backend;
    RealDataSettings real;
    DecodeConfig decode;

    double retain_fraction = 0.5;
    std::uint64_t filter_row_cap = 64;

    Hyperparams hp;
    TrainConfig train_full;     // consolidation budget
    TrainConfig train_side;     // refinement sides (default half of full)
    TrainConfig train_ensemble; // filtration ensemble

    std::string refine_mode = "cross"; // cross | direct
    int refine_rounds = 1;
    std::string consolidate_protocol = "joint"; // joint | pretrain_continue

    StageToggles stages;
    PipelineSeeds seeds;
    std::string out_dir;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::string& path);
// Hash of the canonical config serialization, excluding out_dir (a run is
// identified by what it computes, not where it lives).
std::string config_hash(const PipelineConfig& cfg);

struct FileRecord {
    std::string path; // relative to the run directory
    std::string sha256;
    bool operator==(const FileRecord&) const = default;
};

struct DatasetRecord {
    std::string id;
    std::string context_hash;
    std::string topic_key;
    std::vector<std::string> lineage; // expanded, instantiated, filtered, refined
    std::string backend_id;
    bool fallback = false;
    std::uint64_t slot_seed = 0;
    bool retained = true;
    double filter_score = 0.0;
    std::map<std::string, FileRecord> files; // context, bn, table_weak, table_refined

    bool has_stage(const std::string& s) const {
        for (const auto& l : lineage) {
            if (l == s) return true;
        }
        return false;
    }
};

struct CorpusManifest {
    std::string config_hash;
    std::map<std::string, nlohmann::json> stages; // per-stage info, "complete" flag
    std::vector<DatasetRecord> datasets;          // generation order
    std::map<std::string, nlohmann::json> splits; // filtration / refinement plans
    std::map<std::string, FileRecord> checkpoints;
    std::map<std::string, FileRecord> real_data; // materialized desk pool

    bool stage_complete(const std::string& name) const;
};

nlohmann::json manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const CorpusManifest& m, const std::string& run_dir);
std::optional<CorpusManifest> load_manifest(const std::string& run_dir);

// Executes the staged pipeline under cfg.out_dir, resuming from the
// persisted manifest when stages are already complete for this config.
CorpusManifest run_pipeline(const PipelineConfig& cfg);

// Verifies every hash recorded in the manifest against the files on disk.
void verify_manifest(const CorpusManifest& m, const std::string& run_dir);

// Release bundle: contexts + refined tables + provenance + checksums, and
// the verifier that re-checks them. Throws IntegrityError naming the first
// mismatching file.
void export_corpus(const std::string& run_dir, const std::string& export_dir);
void verify_export(const std::string& export_dir);

// Ground-truth DGP pools for desk-scale evaluation.
struct GroundTruthDgp {
    DatasetContext ctx;
    BayesNetSpec bn;
    Topic topic;
};

std::vector<GroundTruthDgp> make_dgp_pool(int count, std::uint64_t seed,
                                          const BnNoise& noise = {});

// In-memory view of a pipeline run used by evaluation drivers.
struct PipelineArtifacts {
    std::vector<GroundTruthDgp> real_pool;
    std::vector<DatasetContext> real_contexts;
    std::vector<Table> real_tables;
    std::vector<DatasetContext> synth_contexts;
    std::vector<Table> weak_tables;
    std::vector<size_t> retained;
    std::vector<Table> refined_tables; // aligned with retained
    std::optional<ConditionalModel> p_full;
};

PipelineArtifacts load_artifacts(const PipelineConfig& cfg, const CorpusManifest& m);

} // namespace texr
