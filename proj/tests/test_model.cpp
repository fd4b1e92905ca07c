#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/model.hpp"
#include "texr/rng.hpp"

using namespace texr;

namespace {

DatasetContext tiny_mixed_context() {
    DatasetContext ctx;
    ctx.description = "mixed toy context";
    ctx.topic = "toy";
    ctx.features = {
        {"age", ContinuousKind{18, 80}, "Age of the subject in years"},
        {"tier", DiscreteKind{{"basic", "standard", "premium"}}, "Subscription plan tier"},
        {"churn", DiscreteKind{{"yes", "no"}}, "Whether the customer churned"},
    };
    ctx.id = make_context_id(ctx);
    return ctx;
}

DatasetContext discrete3_context() {
    DatasetContext ctx;
    ctx.description = "three small discrete features";
    ctx.topic = "disc3";
    ctx.features = {
        {"u", DiscreteKind{{"u0", "u1"}}, "first"},
        {"v", DiscreteKind{{"v0", "v1", "v2"}}, "second"},
        {"w", DiscreteKind{{"w0", "w1"}}, "third"},
    };
    ctx.id = make_context_id(ctx);
    return ctx;
}

Hyperparams small_hp() {
    Hyperparams hp;
    hp.text_dim = 32;
    hp.fourier = 4;
    hp.mixture = 3;
    hp.width = 32;
    return hp;
}

} // namespace

TEST_CASE("encode_instance is deterministic and rejects observed targets") {
    auto ctx = tiny_mixed_context();
    Row row{NumberValue{44}, CategoryValue{"basic"}, CategoryValue{"no"}};
    auto e1 = encode_instance(small_hp(), ctx, row, {true, true, false}, 2);
    auto e2 = encode_instance(small_hp(), ctx, row, {true, true, false}, 2);
    CHECK(e1.tokens == e2.tokens);
    CHECK(e1.target_query == e2.target_query);
    CHECK(e1.observed == std::vector<int>{0, 1});
    CHECK_THROWS_AS(encode_instance(small_hp(), ctx, row, {true, false, true}, 2),
                    ValidationError);
}

TEST_CASE("zero observed features still yields a defined prediction") {
    auto ctx = tiny_mixed_context();
    ConditionalModel model(small_hp(), 1);
    auto enc = encode_context(model.hp(), ctx);
    auto dist = predict(model, enc, {}, 2);
    const auto& pmf = std::get<CategoricalPmf>(dist).probs;
    CHECK(pmf.size() == 2);
    CHECK(std::accumulate(pmf.begin(), pmf.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));

    Row row{NumberValue{44}, CategoryValue{"basic"}, CategoryValue{"no"}};
    auto ie = encode_instance(small_hp(), ctx, row, {false, false, false}, 2);
    CHECK(ie.tokens.empty());
}

TEST_CASE("the pooled representation is permutation invariant") {
    auto ctx = tiny_mixed_context();
    ConditionalModel model(small_hp(), 7);
    auto enc = encode_context(model.hp(), ctx);
    Row row{NumberValue{25}, CategoryValue{"premium"}, CategoryValue{"yes"}};

    std::vector<ObservedValue> obs{{0, row[0]}, {1, row[1]}};
    std::vector<ObservedValue> swapped{{1, row[1]}, {0, row[0]}};
    auto d1 = std::get<CategoricalPmf>(predict(model, enc, obs, 2)).probs;
    auto d2 = std::get<CategoricalPmf>(predict(model, enc, swapped, 2)).probs;
    for (size_t i = 0; i < d1.size(); ++i) {
        CHECK(std::abs(d1[i] - d2[i]) <= 1e-9);
    }

    // and over random masks on a wider context
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto mask = MaskSampler::sample_with(rng, 3);
        if (mask.observed.size() < 2) continue;
        std::vector<ObservedValue> a, b;
        for (int f : mask.observed) a.push_back({f, row[static_cast<size_t>(f)]});
        b.assign(a.rbegin(), a.rend());
        auto pa = predict(model, enc, a, mask.target);
        auto pb = predict(model, enc, b, mask.target);
        CHECK(std::abs(dist_mean(pa) - dist_mean(pb)) <= 1e-9);
    }
}

TEST_CASE("freshly initialized models are near uniform on a binary target") {
    auto ctx = tiny_mixed_context();
    Hyperparams hp; // default h=64
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        ConditionalModel model(hp, seed);
        auto dist = predict(model, ctx, {}, 2);
        const auto& pmf = std::get<CategoricalPmf>(dist).probs;
        CHECK(std::abs(pmf[0] - 0.5) <= 0.05);
    }
}

TEST_CASE("continuous heads normalize and respect the variance floor") {
    auto ctx = tiny_mixed_context();
    ConditionalModel model(small_hp(), 3);
    std::vector<ObservedValue> obs{{1, CategoryValue{"basic"}}};
    auto dist = predict(model, ctx, obs, 0);
    const auto& mog = std::get<MixtureOfGaussians>(dist);
    double wsum = std::accumulate(mog.weights.begin(), mog.weights.end(), 0.0);
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-6));
    const double range = 80.0 - 18.0;
    for (double v : mog.vars) CHECK(v >= 1e-4 * range * range);
}

TEST_CASE("prop-1 identity: mask expectation equals permutation expectation") {
    auto ctx = discrete3_context();
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        ConditionalModel model(small_hp(), seed);
        auto enc = encode_context(model.hp(), ctx);
        for (const auto& row : oracle::all_discrete_rows(ctx)) {
            double lhs = oracle::mask_expectation_nll(model, enc, row);
            double rhs = oracle::permutation_expectation_nll(model, enc, row);
            CHECK(std::abs(lhs - rhs) <= 1e-9);
        }
    }
}

TEST_CASE("single-feature joints equal the unconditional density") {
    DatasetContext ctx;
    ctx.description = "single feature";
    ctx.features = {{"only", DiscreteKind{{"a", "b"}}, "the lone feature"}};
    ctx.id = make_context_id(ctx);
    ConditionalModel model(small_hp(), 11);
    auto enc = encode_context(model.hp(), ctx);
    Row row{CategoryValue{"b"}};
    std::vector<int> perm{0};
    auto dist = predict(model, enc, {}, 0);
    double expect = std::log(std::get<CategoricalPmf>(dist).probs[1]);
    CHECK(joint_loglik(model, enc, row, perm) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("model joints sum to one for any permutation") {
    auto ctx = discrete3_context();
    ConditionalModel model(small_hp(), 13);
    auto enc = encode_context(model.hp(), ctx);
    std::vector<std::vector<int>> perms{{0, 1, 2}, {2, 0, 1}, {1, 2, 0}};
    for (const auto& perm : perms) {
        double total = 0.0;
        for (const auto& row : oracle::all_discrete_rows(ctx)) {
            total += std::exp(joint_loglik(model, enc, row, perm));
        }
        CHECK(std::abs(total - 1.0) <= 1e-6);
    }
}

TEST_CASE("sample_joint is deterministic, valid, and matches the model joint") {
    DatasetContext ctx;
    ctx.description = "two binary features";
    ctx.features = {
        {"x", DiscreteKind{{"x0", "x1"}}, "first"},
        {"y", DiscreteKind{{"y0", "y1"}}, "second"},
    };
    ctx.id = make_context_id(ctx);
    ConditionalModel model(small_hp(), 17);
    auto enc = encode_context(model.hp(), ctx);
    std::vector<int> perm{0, 1};

    auto r1 = sample_joint(model, enc, perm, 5);
    auto r2 = sample_joint(model, enc, perm, 5);
    CHECK(r1 == r2);

    auto joint = oracle::model_joint(model, enc);
    std::map<std::vector<std::string>, double> freq;
    const int n = 50000;
    for (int s = 0; s < n; ++s) {
        auto row = sample_joint(model, enc, perm, static_cast<std::uint64_t>(s));
        freq[{category_of(row[0]), category_of(row[1])}] += 1.0 / n;
    }
    for (const auto& [key, p] : joint) {
        CHECK(std::abs(freq[key] - p) <= 0.03);
    }
}

TEST_CASE("sampled rows are always type- and range-valid") {
    auto ctx = tiny_mixed_context();
    ConditionalModel model(small_hp(), 23);
    auto enc = encode_context(model.hp(), ctx);
    std::vector<int> perm{2, 0, 1};
    Table t;
    t.context_id = ctx.id;
    for (int s = 0; s < 200; ++s) {
        t.rows.push_back(sample_joint(model, enc, perm, static_cast<std::uint64_t>(s)));
    }
    CHECK(validate_table(ctx, t).empty());
}

TEST_CASE("mask sampler: target never observed, all pairs reachable") {
    Rng rng(3);
    std::set<std::pair<int, std::vector<int>>> seen;
    for (int trial = 0; trial < 4000; ++trial) {
        auto mask = MaskSampler::sample_with(rng, 3);
        for (int o : mask.observed) CHECK(o != mask.target);
        CHECK(std::is_sorted(mask.observed.begin(), mask.observed.end()));
        seen.insert({mask.target, mask.observed});
    }
    // d=3: 3 targets x (1 empty + 2 singles + 1 pair) = 12 (o,t) pairs
    CHECK(seen.size() == 12);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    ConditionalModel model(small_hp(), 29);
    model.set_training_seed(999);
    model.set_manifest_hash("abc123");
    auto bytes = serialize_model(model);
    auto back = deserialize_model(bytes);
    CHECK(back == model);
    CHECK(back.training_seed() == 999);
    CHECK(back.manifest_hash() == "abc123");
    CHECK(serialize_model(back) == bytes);

    CHECK_THROWS_AS(deserialize_model("not a checkpoint"), IntegrityError);
    auto corrupted = bytes;
    corrupted.pop_back();
    CHECK_THROWS_AS(deserialize_model(corrupted), IntegrityError);
}

TEST_CASE("predictive distribution moments") {
    MixtureOfGaussians mog;
    mog.weights = {0.5, 0.5};
    mog.means = {0.4, 0.6};
    mog.vars = {0.01, 0.01};
    CHECK(mog.mean() == doctest::Approx(0.5));
    CHECK(mog.stddev() == doctest::Approx(std::sqrt(0.02)));

    CategoricalPmf pmf;
    pmf.probs = {0.25, 0.75};
    CHECK(pmf.mean() == doctest::Approx(0.75));
}
