#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "texr/model.hpp"
#include "texr/train.hpp"
#include "texr/types.hpp"

namespace texr {

// Two conditional models trained on disjoint real partitions.
struct EnsemblePredictor {
    ConditionalModel m1;
    ConditionalModel m2;
    std::vector<std::string> side1_ids;
    std::vector<std::string> side2_ids;
};

EnsemblePredictor train_ensemble(const std::vector<TrainingSet>& real, const Hyperparams& hp,
                                 const TrainConfig& cfg, std::uint64_t seed);

struct EnsembleStats {
    double mean = 0.0;   // mean of the two predictive means
    double stddev = 0.0; // stddev of the equal-weight two-component mixture
};

// Predictive mean and spread for continuous feature j given the remaining
// features. The stddev combines within-model variance with between-model
// mean spread, floored at 1e-4. Discrete features route to
// discrete_surprise instead.
EnsembleStats ensemble_stats(const EnsemblePredictor& ens, const EncodedContext& enc,
                             const Row& row, int j);

// |value - mean| / stddev.
double zscore(double value, double mean, double stddev);

// -log of the averaged category probability, mapped onto the z scale as
// sqrt(2 * surprise) so discrete and Gaussian scores are commensurate.
double discrete_surprise(const EnsemblePredictor& ens, const EncodedContext& enc, const Row& row,
                         int j);

struct ZScoreReport {
    std::string dataset_id;
    std::vector<std::vector<double>> z; // per scored row, per feature
    double dataset_score = 0.0;         // mean over defined entries
    double coverage = 1.0;              // fraction of entries defined
    bool retained = false;
};

struct FilterConfig {
    double retain_fraction = 0.5;
    size_t row_cap = 0; // 0 = score all rows
    std::uint64_t subsample_seed = 0;
};

ZScoreReport score_dataset(const EnsemblePredictor& ens, const DatasetContext& ctx,
                           const Table& table, const FilterConfig& cfg);

struct FilterResult {
    std::vector<size_t> retained; // indices into the weak corpus, by ascending score
    std::vector<size_t> dropped;
    std::vector<ZScoreReport> reports; // ascending (score, id) order, all datasets
};

// Sorts datasets ascending by score (ties by id) and keeps the bottom
// retain_fraction. retain_fraction = 1 is the identity.
FilterResult filter_corpus(const EnsemblePredictor& ens, const std::vector<TrainingSet>& weak,
                           const FilterConfig& cfg);

// One summary line per dataset: id, score, retained flag, coverage.
std::string reports_to_jsonl(const std::vector<ZScoreReport>& reports);

} // namespace texr
