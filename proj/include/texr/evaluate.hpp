#pragma once

#include <map>
#include <string>
#include <vector>

#include "texr/pipeline.hpp"

namespace texr {

struct EvalConfig {
    int k_shot = 5;
    int test_rows = 48;
    int masks_per_row = 2;
    TrainConfig finetune_cfg; // bounded k-shot adaptation budget
    std::vector<std::uint64_t> seeds;
};

struct EvalCell {
    std::string context_hash;
    std::uint64_t seed = 0;
    std::string arm;
    double zero_shot_nll = 0.0;
    double k_shot_nll = 0.0;
    double accuracy = -1.0; // -1 when the context has no discrete target
    double rmse = -1.0;     // -1 when the context has no continuous target
};

struct ArmAggregate {
    double median_zero_shot_nll = 0.0;
    double median_k_shot_nll = 0.0;
    double mean_accuracy = -1.0;
    double mean_rmse = -1.0;
};

struct EvalReport {
    std::vector<std::string> arms; // fixed column order
    int k_shot = 5;
    std::vector<EvalCell> cells;
    std::map<std::string, ArmAggregate> aggregates;
};

using ArmModels = std::vector<std::pair<std::string, const ConditionalModel*>>;

// Evaluates every arm on every held-out DGP with paired rows, masks, and
// supports. Throws ContaminationError if a held-out context hash appears in
// training_context_hashes.
EvalReport evaluate(const ArmModels& arms, const std::vector<GroundTruthDgp>& held_out,
                    const std::vector<std::string>& training_context_hashes,
                    const EvalConfig& cfg);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);
void emit_report(const EvalReport& report, const std::string& dir);

// Four-arm desk experiment: per seed, builds the synthetic corpus through
// expansion / instantiation / filtration in memory, trains real-only,
// TE+NoR, TE+DR and TE+XR, and runs the paired evaluation.
struct ExperimentConfig {
    PipelineConfig pipeline;
    EvalConfig eval;
    int held_out_count = 20;
    std::uint64_t held_out_seed = 777;
    BnNoise held_out_noise{};
};

EvalReport run_experiment(const ExperimentConfig& cfg);

double median(std::vector<double> values);

} // namespace texr
