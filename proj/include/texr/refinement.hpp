#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "texr/model.hpp"
#include "texr/train.hpp"
#include "texr/types.hpp"

namespace texr {

// Disjoint, exhaustive, balanced assignment of real and synthetic dataset
// ids to sides {1, 2}.
struct SplitPlan {
    std::uint64_t seed = 0;
    std::map<std::string, int> assignment;

    int side_of(const std::string& id) const { return assignment.at(id); }
};

SplitPlan make_split(const std::vector<std::string>& real_ids,
                     const std::vector<std::string>& synth_ids, std::uint64_t seed);

struct RefineConfig {
    Hyperparams hp;
    TrainConfig side_train; // per-side budget, default half of a full run
    int rounds = 1;
};

struct RefinedTable {
    std::string context_id;
    Table table;
    int table_side = 0;  // split side the weak table lived on (0 for direct)
    int refined_by = 0;  // model side that regenerated it
    std::uint64_t row_seed_base = 0;
};

struct RefinedCorpus {
    std::vector<RefinedTable> tables; // same order as the weak input
    SplitPlan split;
    std::string mode; // "cross" or "direct"
    std::uint64_t seed = 0;
};

// Trains p'1 on D1 u W1 and p'2 on D2 u W2, then regenerates every W1 row
// with p'2 and every W2 row with p'1 (fresh permutation per row). A table is
// never refined by the model that saw it in training; violating that is a
// logic error and throws.
RefinedCorpus cross_refine(const std::vector<TrainingSet>& real,
                           const std::vector<TrainingSet>& weak, const SplitPlan& split,
                           const RefineConfig& cfg, std::uint64_t seed);

// Single-model baseline: one model trained on everything refines everything.
RefinedCorpus direct_refine(const std::vector<TrainingSet>& real,
                            const std::vector<TrainingSet>& weak, const RefineConfig& cfg,
                            std::uint64_t seed);

enum class ConsolidateProtocol {
    Joint,            // one training pass over real u refined
    PretrainContinue, // pretrain on refined, continue on real
};

ConditionalModel consolidate(const std::vector<TrainingSet>& real,
                             const std::vector<TrainingSet>& refined, const Hyperparams& hp,
                             const TrainConfig& cfg, std::uint64_t seed,
                             ConsolidateProtocol protocol = ConsolidateProtocol::Joint);

} // namespace texr
