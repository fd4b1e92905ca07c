#include "texr/train.hpp"

#include <algorithm>
#include <cmath>

#include "texr/errors.hpp"
#include "texr/hash.hpp"

namespace texr {

namespace {

struct BatchItem {
    size_t dataset;
    size_t row;
    MaskSampler::Mask mask;
};

std::vector<TrainingSet> non_empty(const std::vector<TrainingSet>& datasets) {
    std::vector<TrainingSet> out;
    for (const auto& ds : datasets) {
        if (ds.ctx && ds.table && !ds.table->rows.empty()) out.push_back(ds);
    }
    if (out.empty()) throw ValidationError("train: no non-empty dataset");
    return out;
}

std::vector<ObservedValue> observed_values(const Row& row, const std::vector<int>& indices) {
    std::vector<ObservedValue> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back({i, row[static_cast<size_t>(i)]});
    return out;
}

TrainResult run_training(ConditionalModel model, const std::vector<TrainingSet>& datasets_in,
                         const TrainConfig& cfg, std::uint64_t seed) {
    auto datasets = non_empty(datasets_in);
    std::vector<EncodedContext> encoded;
    encoded.reserve(datasets.size());
    for (const auto& ds : datasets) encoded.push_back(encode_context(model.hp(), *ds.ctx));

    const size_t P = model.param_count();
    std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
    Rng rng(mix_seed(seed, "train"));
    TrainResult result{std::move(model), {}};
    result.loss_trace.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        std::vector<BatchItem> batch(static_cast<size_t>(cfg.batch_size));
        for (auto& item : batch) {
            item.dataset = rng.uniform_int(datasets.size());
            item.row = rng.uniform_int(datasets[item.dataset].table->rows.size());
            item.mask = MaskSampler::sample_with(
                rng, static_cast<int>(datasets[item.dataset].ctx->features.size()));
        }
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        for (const auto& item : batch) {
            const Row& row = datasets[item.dataset].table->rows[item.row];
            auto obs = observed_values(row, item.mask.observed);
            loss += inv_b * target_nll_grad(result.model, encoded[item.dataset], obs,
                                            item.mask.target,
                                            row[static_cast<size_t>(item.mask.target)], grad,
                                            inv_b);
        }
        if (!std::isfinite(loss)) {
            std::string ids;
            for (const auto& item : batch) {
                if (!ids.empty()) ids += ",";
                ids += datasets[item.dataset].ctx->id;
            }
            throw TrainingError("non-finite loss at step " + std::to_string(step) +
                                " (batch datasets: " + ids + ")");
        }
        result.loss_trace.push_back(loss);

        const double t = static_cast<double>(step + 1);
        const double bc1 = 1.0 - std::pow(cfg.beta1, t);
        const double bc2 = 1.0 - std::pow(cfg.beta2, t);
        auto params = result.model.params();
        for (size_t i = 0; i < P; ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            params[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        }
    }
    result.model.set_training_seed(seed);
    return result;
}

} // namespace

TrainResult train(const std::vector<TrainingSet>& datasets, const Hyperparams& hp,
                  const TrainConfig& cfg, std::uint64_t seed) {
    ConditionalModel model(hp, mix_seed(seed, "init"));
    return run_training(std::move(model), datasets, cfg, seed);
}

TrainResult train_from(ConditionalModel init, const std::vector<TrainingSet>& datasets,
                       const TrainConfig& cfg, std::uint64_t seed) {
    return run_training(std::move(init), datasets, cfg, seed);
}

ConditionalModel finetune(const ConditionalModel& base, const DatasetContext& ctx,
                          const Table& support, const TrainConfig& cfg, std::uint64_t seed) {
    if (support.rows.empty()) throw ValidationError("finetune: support set is empty");
    if (cfg.steps == 0) return base;
    std::vector<TrainingSet> datasets{{&ctx, &support}};
    return run_training(base, datasets, cfg, seed).model;
}

double grad_check(const ConditionalModel& model, const std::vector<TrainingSet>& datasets_in,
                  int batch_size, double epsilon, std::uint64_t seed, int coords) {
    auto datasets = non_empty(datasets_in);
    std::vector<EncodedContext> encoded;
    for (const auto& ds : datasets) encoded.push_back(encode_context(model.hp(), *ds.ctx));

    Rng rng(mix_seed(seed, "grad_check"));
    std::vector<BatchItem> batch(static_cast<size_t>(batch_size));
    for (auto& item : batch) {
        item.dataset = rng.uniform_int(datasets.size());
        item.row = rng.uniform_int(datasets[item.dataset].table->rows.size());
        item.mask = MaskSampler::sample_with(
            rng, static_cast<int>(datasets[item.dataset].ctx->features.size()));
    }
    const double inv_b = 1.0 / static_cast<double>(batch_size);

    auto batch_loss = [&](const ConditionalModel& mdl) {
        double loss = 0.0;
        for (const auto& item : batch) {
            const Row& row = datasets[item.dataset].table->rows[item.row];
            auto obs = observed_values(row, item.mask.observed);
            loss += inv_b * target_nll(mdl, encoded[item.dataset], obs, item.mask.target,
                                       row[static_cast<size_t>(item.mask.target)]);
        }
        return loss;
    };

    std::vector<double> analytic(model.param_count(), 0.0);
    for (const auto& item : batch) {
        const Row& row = datasets[item.dataset].table->rows[item.row];
        auto obs = observed_values(row, item.mask.observed);
        target_nll_grad(model, encoded[item.dataset], obs, item.mask.target,
                        row[static_cast<size_t>(item.mask.target)], analytic, inv_b);
    }

    ConditionalModel probe = model;
    const size_t P = probe.param_count();
    const size_t n_coords = std::min(static_cast<size_t>(coords), P);
    std::vector<int> picked =
        rng.sample_indices(static_cast<int>(P), static_cast<int>(n_coords));

    double max_rel = 0.0;
    auto params = probe.params();
    for (int idx : picked) {
        const size_t i = static_cast<size_t>(idx);
        const double keep = params[i];
        params[i] = keep + epsilon;
        const double up = batch_loss(probe);
        params[i] = keep - epsilon;
        const double down = batch_loss(probe);
        params[i] = keep;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double denom = std::max(std::abs(analytic[i]) + std::abs(numeric), 1e-3);
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

} // namespace texr
