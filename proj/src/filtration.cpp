#include "texr/filtration.hpp"

#include <algorithm>
#include <cmath>

#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

EnsemblePredictor train_ensemble(const std::vector<TrainingSet>& real, const Hyperparams& hp,
                                 const TrainConfig& cfg, std::uint64_t seed) {
    if (real.empty()) throw ValidationError("train_ensemble: no real datasets");
    // Balanced random partition by dataset, disjoint by construction.
    std::vector<size_t> order(real.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(seed, "ensemble_split"));
    rng.shuffle(order);

    std::vector<TrainingSet> side1, side2;
    std::vector<std::string> ids1, ids2;
    for (size_t i = 0; i < order.size(); ++i) {
        const auto& ds = real[order[i]];
        if (i % 2 == 0) {
            side1.push_back(ds);
            ids1.push_back(ds.ctx->id);
        } else {
            side2.push_back(ds);
            ids2.push_back(ds.ctx->id);
        }
    }
    if (side2.empty()) side2 = side1; // single-dataset corpora share the data

    auto m1 = train(side1, hp, cfg, mix_seed(seed, "ensemble_m1"));
    auto m2 = train(side2, hp, cfg, mix_seed(seed, "ensemble_m2"));
    return EnsemblePredictor{std::move(m1.model), std::move(m2.model), std::move(ids1),
                             std::move(ids2)};
}

namespace {

std::vector<ObservedValue> all_but(const Row& row, int j) {
    std::vector<ObservedValue> obs;
    obs.reserve(row.size() - 1);
    for (size_t i = 0; i < row.size(); ++i) {
        if (static_cast<int>(i) != j) obs.push_back({static_cast<int>(i), row[i]});
    }
    return obs;
}

} // namespace

EnsembleStats ensemble_stats(const EnsemblePredictor& ens, const EncodedContext& enc,
                             const Row& row, int j) {
    if (!is_continuous(enc.ctx->features[static_cast<size_t>(j)].kind)) {
        throw ValidationError("ensemble_stats: feature " + std::to_string(j) +
                              " is discrete; use discrete_surprise");
    }
    auto obs = all_but(row, j);
    auto d1 = predict(ens.m1, enc, obs, j);
    auto d2 = predict(ens.m2, enc, obs, j);
    const double m1 = dist_mean(d1), m2 = dist_mean(d2);
    const double v1 = dist_stddev(d1) * dist_stddev(d1);
    const double v2 = dist_stddev(d2) * dist_stddev(d2);
    EnsembleStats out;
    out.mean = 0.5 * (m1 + m2);
    const double second = 0.5 * (v1 + m1 * m1) + 0.5 * (v2 + m2 * m2);
    out.stddev = std::max(std::sqrt(std::max(second - out.mean * out.mean, 0.0)), 1e-4);
    return out;
}

double zscore(double value, double mean, double stddev) {
    return std::abs(value - mean) / stddev;
}

double discrete_surprise(const EnsemblePredictor& ens, const EncodedContext& enc, const Row& row,
                         int j) {
    const auto& spec = enc.ctx->features[static_cast<size_t>(j)];
    if (is_continuous(spec.kind)) {
        throw ValidationError("discrete_surprise: feature " + std::to_string(j) +
                              " is continuous; use zscore");
    }
    auto obs = all_but(row, j);
    auto d1 = predict(ens.m1, enc, obs, j);
    auto d2 = predict(ens.m2, enc, obs, j);
    const auto& p1 = std::get<CategoricalPmf>(d1).probs;
    const auto& p2 = std::get<CategoricalPmf>(d2).probs;
    const auto& cats = std::get<DiscreteKind>(spec.kind).categories;
    const auto& cat = category_of(row[static_cast<size_t>(j)]);
    size_t idx = static_cast<size_t>(std::find(cats.begin(), cats.end(), cat) - cats.begin());
    if (idx >= cats.size()) {
        throw ValidationError("discrete_surprise: category '" + cat + "' out of domain");
    }
    double p = 0.5 * (p1[idx] + p2[idx]);
    double surprise = -std::log(std::max(p, 1e-300));
    return std::sqrt(2.0 * surprise);
}

ZScoreReport score_dataset(const EnsemblePredictor& ens, const DatasetContext& ctx,
                           const Table& table, const FilterConfig& cfg) {
    ZScoreReport report;
    report.dataset_id = ctx.id;
    auto enc = encode_context(ens.m1.hp(), ctx);

    std::vector<size_t> rows(table.rows.size());
    std::iota(rows.begin(), rows.end(), 0);
    if (cfg.row_cap > 0 && table.rows.size() > cfg.row_cap) {
        Rng rng(mix_seed(mix_seed(cfg.subsample_seed, "rows"), ctx.id));
        rng.shuffle(rows);
        rows.resize(cfg.row_cap);
        std::sort(rows.begin(), rows.end());
    }

    double total = 0.0;
    size_t defined = 0, entries = 0;
    for (size_t r : rows) {
        const Row& row = table.rows[r];
        std::vector<double> zrow(row.size(), 0.0);
        for (size_t j = 0; j < row.size(); ++j) {
            ++entries;
            double z;
            if (is_continuous(ctx.features[j].kind)) {
                auto stats = ensemble_stats(ens, enc, row, static_cast<int>(j));
                z = zscore(number_of(row[j]), stats.mean, stats.stddev);
            } else {
                z = discrete_surprise(ens, enc, row, static_cast<int>(j));
            }
            zrow[j] = z;
            if (std::isfinite(z)) {
                total += z;
                ++defined;
            }
        }
        report.z.push_back(std::move(zrow));
    }
    report.dataset_score = defined > 0 ? total / static_cast<double>(defined) : 0.0;
    report.coverage = entries > 0 ? static_cast<double>(defined) / static_cast<double>(entries)
                                  : 1.0;
    return report;
}

FilterResult filter_corpus(const EnsemblePredictor& ens, const std::vector<TrainingSet>& weak,
                           const FilterConfig& cfg) {
    if (!(cfg.retain_fraction > 0.0) || cfg.retain_fraction > 1.0) {
        throw ValidationError("filter_corpus: retain_fraction must be in (0, 1]");
    }
    FilterResult result;
    std::vector<std::pair<double, size_t>> ranked;
    for (size_t i = 0; i < weak.size(); ++i) {
        auto report = score_dataset(ens, *weak[i].ctx, *weak[i].table, cfg);
        ranked.emplace_back(report.dataset_score, i);
        result.reports.push_back(std::move(report));
    }
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return result.reports[a.second].dataset_id < result.reports[b.second].dataset_id;
    });

    const size_t n = weak.size();
    size_t keep = n == 0 ? 0
                         : std::max<size_t>(
                               1, static_cast<size_t>(std::floor(
                                      cfg.retain_fraction * static_cast<double>(n) + 1e-9)));
    keep = std::min(keep, n);

    std::vector<ZScoreReport> ordered;
    for (size_t rank = 0; rank < ranked.size(); ++rank) {
        size_t idx = ranked[rank].second;
        bool kept = rank < keep;
        result.reports[idx].retained = kept;
        (kept ? result.retained : result.dropped).push_back(idx);
        ordered.push_back(result.reports[idx]);
    }
    result.reports = std::move(ordered);
    return result;
}

std::string reports_to_jsonl(const std::vector<ZScoreReport>& reports) {
    std::string out;
    for (const auto& r : reports) {
        nlohmann::json j;
        j["dataset_id"] = r.dataset_id;
        j["score"] = r.dataset_score;
        j["retained"] = r.retained;
        j["coverage"] = r.coverage;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

} // namespace texr
