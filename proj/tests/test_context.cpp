#include "doctest.h"

#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"
#include "texr/types.hpp"

using namespace texr;

namespace {

DatasetContext demo_context() {
    DatasetContext ctx;
    ctx.domain = "telemedicine";
    ctx.topic = "patient_no_show";
    ctx.description = "Appointment records with outcomes.";
    ctx.features = {
        {"age", ContinuousKind{18, 80}, "Age of the subject in years"},
        {"visit_type", DiscreteKind{{"new", "followup"}}, "Type of the scheduled visit"},
        {"no_show", DiscreteKind{{"yes", "no"}}, "Whether the patient missed the visit"},
    };
    ctx.id = make_context_id(ctx);
    return ctx;
}

// Random valid context for round-trip property tests.
DatasetContext random_context(Rng& rng) {
    DatasetContext ctx;
    ctx.domain = "domain_" + std::to_string(rng.uniform_int(100));
    ctx.topic = "topic_" + std::to_string(rng.uniform_int(100));
    ctx.description = "Randomly generated context for property tests.";
    int d = 1 + static_cast<int>(rng.uniform_int(9));
    for (int i = 0; i < d; ++i) {
        FeatureSpec f;
        f.name = "f" + std::to_string(i);
        f.description = "feature number " + std::to_string(i);
        if (rng.uniform01() < 0.5) {
            double lo = rng.uniform(-100.0, 100.0);
            f.kind = ContinuousKind{lo, lo + rng.uniform(0.5, 50.0)};
        } else {
            int cats = 2 + static_cast<int>(rng.uniform_int(4));
            DiscreteKind dk;
            for (int c = 0; c < cats; ++c) dk.categories.push_back("c" + std::to_string(c));
            f.kind = std::move(dk);
        }
        ctx.features.push_back(std::move(f));
    }
    ctx.id = make_context_id(ctx);
    return ctx;
}

Table random_table(const DatasetContext& ctx, Rng& rng, size_t rows) {
    Table t;
    t.context_id = ctx.id;
    for (size_t r = 0; r < rows; ++r) {
        Row row;
        for (const auto& f : ctx.features) {
            if (const auto* ck = std::get_if<ContinuousKind>(&f.kind)) {
                row.push_back(NumberValue{rng.uniform(ck->lo, ck->hi)});
            } else {
                const auto& cats = std::get<DiscreteKind>(f.kind).categories;
                row.push_back(CategoryValue{cats[rng.uniform_int(cats.size())]});
            }
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace

TEST_CASE("validate_context flags duplicate feature names") {
    auto ctx = demo_context();
    ctx.features.push_back({"age", ContinuousKind{0, 1}, "duplicate"});
    auto report = validate_context(ctx);
    REQUIRE(report.size() == 1);
    CHECK(report[0].where == "age");
    CHECK(report[0].reason.find("duplicate") != std::string::npos);
}

TEST_CASE("validate_context flags inverted ranges") {
    auto ctx = demo_context();
    ctx.features[0].kind = ContinuousKind{80, 18};
    auto report = validate_context(ctx);
    REQUIRE(report.size() == 1);
    CHECK(report[0].reason.find("inverted") != std::string::npos);
}

TEST_CASE("the appendix-style feature spec validates cleanly") {
    DatasetContext ctx;
    ctx.description = "Dataset description";
    ctx.features = {
        {"age", ContinuousKind{18, 80}, "Age of the subject in years"},
    };
    ctx.id = make_context_id(ctx);
    CHECK(validate_context(ctx).empty());
}

TEST_CASE("context serialization round-trips") {
    auto ctx = demo_context();
    auto back = parse_context(serialize_context(ctx));
    CHECK(back == ctx);
}

TEST_CASE("round-trip identity holds over random contexts and tables") {
    Rng rng(20260811);
    for (int iter = 0; iter < 50; ++iter) {
        auto ctx = random_context(rng);
        REQUIRE(validate_context(ctx).empty());
        CHECK(parse_context(serialize_context(ctx)) == ctx);

        auto table = random_table(ctx, rng, 1 + rng.uniform_int(8));
        CHECK(table_from_csv(ctx, table_to_csv(ctx, table)) == table);
        CHECK(table_from_jsonl(ctx, table_to_jsonl(ctx, table)) == table);
    }
}

TEST_CASE("the dataset-specification JSON shape parses") {
    // The two-feature example shape from the spec-generation prompt.
    const std::string text = R"({
      "description": "Dataset description",
      "features": [
        {"name": "age", "type": "continuous", "description": "Age of the subject in years",
         "range": [18, 80]},
        {"name": "category", "type": "discrete", "description": "Classification category",
         "categories": ["A", "B", "C"]}
      ]
    })";
    auto ctx = parse_context(text);
    REQUIRE(ctx.features.size() == 2);
    CHECK(ctx.features[0].name == "age");
    CHECK(std::get<ContinuousKind>(ctx.features[0].kind).lo == 18);
    CHECK(std::get<DiscreteKind>(ctx.features[1].kind).categories ==
          std::vector<std::string>{"A", "B", "C"});
    CHECK(validate_context(ctx).empty());
}

TEST_CASE("parse errors name the offending feature index") {
    const std::string text = R"({
      "description": "d",
      "features": [
        {"name": "ok", "type": "continuous", "description": "fine", "range": [0, 1]},
        {"name": "broken", "type": "continuous", "range": [0, 1]}
      ]
    })";
    CHECK_THROWS_WITH_AS(parse_context(text), doctest::Contains("features[1]"), ValidationError);
}

TEST_CASE("malformed JSON reports a byte position") {
    CHECK_THROWS_WITH_AS(parse_context("{\"description\": "), doctest::Contains("byte"),
                         ValidationError);
}

TEST_CASE("validate_table reports coordinates") {
    auto ctx = demo_context();
    Table t;
    t.context_id = ctx.id;
    t.rows.push_back({NumberValue{30}, CategoryValue{"new"}, CategoryValue{"yes"}});
    t.rows.push_back({NumberValue{300}, CategoryValue{"D"}, CategoryValue{"no"}});
    auto report = validate_table(ctx, t);
    REQUIRE(report.size() == 2);
    CHECK(report[0].row == 1);
    CHECK(report[0].column == 0);
    CHECK(report[1].row == 1);
    CHECK(report[1].column == 1);
    CHECK(report[1].reason.find("'D'") != std::string::npos);
}

TEST_CASE("empty tables are vacuously valid") {
    auto ctx = demo_context();
    Table t;
    t.context_id = ctx.id;
    CHECK(validate_table(ctx, t).empty());
}

TEST_CASE("validate_table on a mismatched context id is a caller error") {
    auto ctx = demo_context();
    Table t;
    t.context_id = "someone-else";
    CHECK_THROWS_AS(validate_table(ctx, t), ValidationError);
}

TEST_CASE("content hash ignores the id, ids are content-addressed") {
    auto ctx = demo_context();
    auto hash1 = context_content_hash(ctx);
    ctx.id = "renamed";
    CHECK(context_content_hash(ctx) == hash1);
    ctx.description += " updated";
    CHECK(context_content_hash(ctx) != hash1);
    CHECK(make_context_id(ctx).find("patient_no_show-") == 0);
}

TEST_CASE("csv quoting survives commas and quotes in categories") {
    DatasetContext ctx;
    ctx.description = "quoting";
    ctx.features = {{"label", DiscreteKind{{"a,b", "with \"quote\""}}, "tricky labels"}};
    ctx.id = make_context_id(ctx);
    Table t;
    t.context_id = ctx.id;
    t.rows.push_back({CategoryValue{"a,b"}});
    t.rows.push_back({CategoryValue{"with \"quote\""}});
    CHECK(table_from_csv(ctx, table_to_csv(ctx, t)) == t);
}
