#include "doctest.h"

#include <cmath>

#include "texr/bayes_net.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/model.hpp"
#include "texr/train.hpp"

using namespace texr;

namespace {

Hyperparams small_hp() {
    Hyperparams hp;
    hp.text_dim = 32;
    hp.fourier = 4;
    hp.mixture = 3;
    hp.width = 32;
    return hp;
}

TrainConfig quick_cfg(int steps) {
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = 32;
    cfg.lr = 2e-3;
    return cfg;
}

DatasetContext binary_context() {
    DatasetContext ctx;
    ctx.description = "one binary feature";
    ctx.topic = "bernoulli";
    ctx.features = {{"vote", DiscreteKind{{"yes", "no"}}, "a 70/30 vote outcome"}};
    ctx.id = make_context_id(ctx);
    return ctx;
}

Table binary_table(const DatasetContext& ctx, int yes, int no) {
    Table t;
    t.context_id = ctx.id;
    for (int i = 0; i < yes; ++i) t.rows.push_back({CategoryValue{"yes"}});
    for (int i = 0; i < no; ++i) t.rows.push_back({CategoryValue{"no"}});
    return t;
}

DatasetContext chain_context() {
    DatasetContext ctx;
    ctx.description = "two dependent binary features";
    ctx.topic = "chain";
    ctx.features = {
        {"cause", DiscreteKind{{"lo", "hi"}}, "upstream driver"},
        {"effect", DiscreteKind{{"off", "on"}}, "downstream response"},
    };
    ctx.id = make_context_id(ctx);
    return ctx;
}

BayesNetSpec chain_bn(const DatasetContext& ctx) {
    BayesNetSpec bn;
    bn.context_id = ctx.id;
    bn.dag.order = {0, 1};
    bn.dag.edges = {{0, 1}};
    DiscretePmf a;
    a.table[{}] = {0.45, 0.55};
    DiscretePmf b;
    b.table[{0}] = {0.85, 0.15};
    b.table[{1}] = {0.2, 0.8};
    bn.cpts = {a, b};
    return bn;
}

} // namespace

TEST_CASE("training fits a 70/30 marginal") {
    auto ctx = binary_context();
    auto table = binary_table(ctx, 700, 300);
    auto result = train({{&ctx, &table}}, small_hp(), quick_cfg(4000), 1);
    auto dist = predict(result.model, ctx, {}, 0);
    const auto& pmf = std::get<CategoricalPmf>(dist).probs;
    CHECK(std::abs(pmf[0] - 0.7) <= 0.03);
    CHECK(std::abs(pmf[1] - 0.3) <= 0.03);
}

TEST_CASE("loss trace is finite everywhere and decreases over the first epoch") {
    auto ctx = binary_context();
    auto table = binary_table(ctx, 70, 30);
    auto result = train({{&ctx, &table}}, small_hp(), quick_cfg(600), 2);
    REQUIRE(result.loss_trace.size() == 600);
    for (double l : result.loss_trace) CHECK(std::isfinite(l));
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 50; ++i) head += result.loss_trace[static_cast<size_t>(i)];
    for (int i = 550; i < 600; ++i) tail += result.loss_trace[static_cast<size_t>(i)];
    CHECK(tail < head);
}

TEST_CASE("training is bit-deterministic in the seed") {
    auto ctx = binary_context();
    auto table = binary_table(ctx, 40, 60);
    auto r1 = train({{&ctx, &table}}, small_hp(), quick_cfg(120), 3);
    auto r2 = train({{&ctx, &table}}, small_hp(), quick_cfg(120), 3);
    CHECK(serialize_model(r1.model) == serialize_model(r2.model));
    auto r3 = train({{&ctx, &table}}, small_hp(), quick_cfg(120), 4);
    CHECK(serialize_model(r1.model) != serialize_model(r3.model));
}

TEST_CASE("training requires a non-empty dataset") {
    auto ctx = binary_context();
    Table empty;
    empty.context_id = ctx.id;
    CHECK_THROWS_AS(train({{&ctx, &empty}}, small_hp(), quick_cfg(10), 1), ValidationError);
}

TEST_CASE("a converged model reproduces the generating conditional") {
    auto ctx = chain_context();
    auto bn = chain_bn(ctx);
    auto table = sample_table(bn, ctx, 1500, 8);
    auto result = train({{&ctx, &table}}, small_hp(), quick_cfg(5000), 5);

    for (int a = 0; a < 2; ++a) {
        std::vector<ObservedValue> obs{
            {0, CategoryValue{std::get<DiscreteKind>(ctx.features[0].kind).categories
                                  [static_cast<size_t>(a)]}}};
        auto dist = predict(result.model, ctx, obs, 1);
        const auto& pmf = std::get<CategoricalPmf>(dist).probs;
        const auto& truth = std::get<DiscretePmf>(bn.cpts[1]).table.at({a});
        CHECK(std::abs(pmf[0] - truth[0]) <= 0.05);
        CHECK(std::abs(pmf[1] - truth[1]) <= 0.05);
    }
}

TEST_CASE("analytic gradients match finite differences") {
    auto ctx = chain_context();
    auto bn = chain_bn(ctx);
    auto table = sample_table(bn, ctx, 64, 10);
    // mixed-kind context exercises both heads
    DatasetContext mixed;
    mixed.description = "mixed kinds";
    mixed.topic = "mixed";
    mixed.features = {
        {"age", ContinuousKind{18, 80}, "Age of the subject in years"},
        {"churn_flag", DiscreteKind{{"yes", "no"}}, "Whether the customer churned"},
        {"risk_score", ContinuousKind{0, 100}, "Composite risk score"},
    };
    mixed.id = make_context_id(mixed);
    auto mixed_bn = procedural_bn(mixed, 4);
    auto mixed_table = sample_table(mixed_bn, mixed, 64, 11);

    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        ConditionalModel model(small_hp(), seed + 100);
        double err = grad_check(model, {{&ctx, &table}, {&mixed, &mixed_table}}, 8, 1e-5,
                                seed, 200);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("a crushed mixture weight keeps gradients finite") {
    DatasetContext ctx;
    ctx.description = "single continuous feature";
    ctx.topic = "cont";
    ctx.features = {{"x", ContinuousKind{0, 1}, "a bounded continuous value"}};
    ctx.id = make_context_id(ctx);
    Table t;
    t.context_id = ctx.id;
    for (int i = 0; i < 16; ++i) {
        t.rows.push_back({NumberValue{0.25 + 0.5 * (i % 2)}});
    }
    ConditionalModel model(small_hp(), 6);
    // Push the first component's weight logit far down: softmax weight ~ 0.
    model.params()[model.layout().bc + 0] = -50.0;
    auto enc = encode_context(model.hp(), ctx);
    std::vector<double> grad(model.param_count(), 0.0);
    double nll = target_nll_grad(model, enc, {}, 0, NumberValue{0.4}, grad, 1.0);
    CHECK(std::isfinite(nll));
    for (double g : grad) CHECK(std::isfinite(g));
}

TEST_CASE("finetune with a zero budget is the identity") {
    auto ctx = binary_context();
    auto table = binary_table(ctx, 10, 10);
    ConditionalModel base(small_hp(), 9);
    auto tuned = finetune(base, ctx, table, quick_cfg(0), 1);
    CHECK(serialize_model(tuned) == serialize_model(base));
}

TEST_CASE("finetune adapts without touching the base model") {
    auto ctx = binary_context();
    auto big = binary_table(ctx, 90, 10);
    ConditionalModel base(small_hp(), 10);
    auto base_bytes = serialize_model(base);

    auto enc = encode_context(base.hp(), ctx);
    double before = target_nll(base, enc, {}, 0, CategoryValue{"yes"});
    auto tuned = finetune(base, ctx, big, quick_cfg(800), 2);
    double after = target_nll(tuned, enc, {}, 0, CategoryValue{"yes"});
    CHECK(after < before);
    CHECK(serialize_model(base) == base_bytes);
}

TEST_CASE("k-shot improves over zero-shot, many-shot over few-shot (median of seeds)") {
    auto ctx = chain_context();
    auto bn = chain_bn(ctx);
    // The base model knows a *different* context, so the support set carries
    // real signal about this one.
    DatasetContext other;
    other.description = "unrelated binary pair";
    other.topic = "other";
    other.features = {
        {"alpha", DiscreteKind{{"l", "r"}}, "left or right"},
        {"beta", DiscreteKind{{"d", "u"}}, "down or up"},
    };
    other.id = make_context_id(other);
    auto other_bn = procedural_bn(other, 2);
    auto other_table = sample_table(other_bn, other, 400, 3);
    auto base = train({{&other, &other_table}}, small_hp(), quick_cfg(1500), 6).model;

    auto eval_nll = [&](const ConditionalModel& m, std::uint64_t seed) {
        auto enc = encode_context(m.hp(), ctx);
        auto test_rows = sample_table(bn, ctx, 200, 1000 + seed);
        Rng rng(seed);
        double total = 0.0;
        int count = 0;
        for (const auto& row : test_rows.rows) {
            auto mask = MaskSampler::sample_with(rng, 2);
            std::vector<ObservedValue> obs;
            for (int f : mask.observed) obs.push_back({f, row[static_cast<size_t>(f)]});
            total += target_nll(m, enc, obs, mask.target,
                                row[static_cast<size_t>(mask.target)]);
            ++count;
        }
        return total / count;
    };

    int five_wins = 0, many_wins = 0;
    const int seeds = 5;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        auto support5 = sample_table(bn, ctx, 5, 2000 + seed);
        TrainConfig ft = quick_cfg(150);
        ft.lr = 1e-3;
        auto tuned5 = finetune(base, ctx, support5, ft, seed);
        double zero = eval_nll(base, seed);
        double five = eval_nll(tuned5, seed);
        if (five <= zero) ++five_wins;

        auto support_many = sample_table(bn, ctx, 1000, 3000 + seed);
        TrainConfig ftm = quick_cfg(1200);
        ftm.lr = 1e-3;
        auto tuned_many = finetune(base, ctx, support_many, ftm, seed);
        double many = eval_nll(tuned_many, seed);
        if (many <= five) ++many_wins;
    }
    CHECK(five_wins * 2 > seeds);  // median improvement
    CHECK(many_wins * 2 > seeds);
}
