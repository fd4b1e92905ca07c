#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texr/model.hpp"
#include "texr/types.hpp"

namespace texr {

struct TrainingSet {
    const DatasetContext* ctx = nullptr;
    const Table* table = nullptr;
};

struct TrainConfig {
    int steps = 2000;
    int batch_size = 64;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainResult {
    ConditionalModel model;
    std::vector<double> loss_trace; // batch mean NLL per step
};

// Mini-batch training of the masked conditional objective: uniform dataset,
// uniform row, masked (o, t); Adam updates. (datasets, cfg, seed) determine
// the parameters bit-exactly. Throws TrainingError on a non-finite loss,
// naming the step and the batch's datasets.
TrainResult train(const std::vector<TrainingSet>& datasets, const Hyperparams& hp,
                  const TrainConfig& cfg, std::uint64_t seed);

// Warm-start variant used by finetune and the pretrain-then-continue
// consolidation protocol.
TrainResult train_from(ConditionalModel init, const std::vector<TrainingSet>& datasets,
                       const TrainConfig& cfg, std::uint64_t seed);

// k-shot adaptation: continues training on the support rows only. The base
// model is untouched; a zero-step budget returns it unchanged.
ConditionalModel finetune(const ConditionalModel& base, const DatasetContext& ctx,
                          const Table& support, const TrainConfig& cfg, std::uint64_t seed);

// Max relative error between analytic batch gradients and central finite
// differences over >= `coords` sampled coordinates. Relative error uses
// max(|ga| + |gn|, 1e-3) as the denominator.
double grad_check(const ConditionalModel& model, const std::vector<TrainingSet>& datasets,
                  int batch_size, double epsilon, std::uint64_t seed, int coords = 200);

} // namespace texr
