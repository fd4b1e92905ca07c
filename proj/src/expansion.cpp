#include "texr/expansion.hpp"

#include <algorithm>
#include <set>

#include "texr/archetypes.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

using nlohmann::json;

namespace {

std::string humanize(const std::string& snake) {
    std::string out = snake;
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

// Validator for ["a", "b", ...] responses that must hold exactly `count`
// distinct non-empty strings.
ResponseValidator string_array_validator(int count) {
    return [count](const std::string& text, json& out) -> std::string {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            return std::string("invalid json: ") + e.what();
        }
        if (!j.is_array()) return "not an array";
        if (static_cast<int>(j.size()) != count) {
            return "expected " + std::to_string(count) + " entries, got " +
                   std::to_string(j.size());
        }
        std::set<std::string> seen;
        for (const auto& item : j) {
            if (!item.is_string() || item.get<std::string>().empty()) {
                return "entries must be non-empty strings";
            }
            if (!seen.insert(item.get<std::string>()).second) {
                return "duplicate entry '" + item.get<std::string>() + "'";
            }
        }
        out = std::move(j);
        return {};
    };
}

std::vector<std::string> pick_categories(int n, std::uint64_t seed) {
    const auto& pool = category_pool();
    Rng rng(mix_seed(seed, "categories"));
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::string> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (i < static_cast<int>(pool.size())) {
            out.push_back(pool[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        } else {
            out.push_back("Specialized Sector " + std::to_string(i + 1));
        }
    }
    return out;
}

} // namespace

TopicUniverse build_topic_universe(TextGenBackend& backend, const ExpansionBudget& budget,
                                   std::uint64_t seed, bool allow_procedural_fallback) {
    if (!budget.valid()) throw ValidationError("expansion budget fields must be positive");
    ProceduralBackend fallback;
    TextGenBackend* fb = allow_procedural_fallback ? &fallback : nullptr;
    const std::string sys = system_prompt();
    TopicUniverse universe;

    const auto categories = pick_categories(budget.n_categories, seed);
    std::set<std::string> seen_triples;
    for (size_t ci = 0; ci < categories.size(); ++ci) {
        const std::string& category = categories[ci];
        auto domains_out = generate_with_retry(
            backend, fb, "domains", category, sys,
            domain_generation_prompt(budget.domains_per_category, category), DecodeConfig{},
            mix_seed(seed, "domains", ci), string_array_validator(budget.domains_per_category));
        universe.log.push_back(domains_out.record);

        for (size_t di = 0; di < domains_out.value.size(); ++di) {
            const std::string domain = domains_out.value[di].get<std::string>();
            auto topics_out = generate_with_retry(
                backend, fb, "topics", category + "/" + domain, sys,
                topic_generation_prompt(budget.topics_per_domain, {domain}), DecodeConfig{},
                mix_seed(mix_seed(seed, "topics", ci), di),
                string_array_validator(budget.topics_per_domain));
            universe.log.push_back(topics_out.record);

            for (const auto& t : topics_out.value) {
                Topic topic{category, domain, t.get<std::string>()};
                // Same scenario under the same (category, domain) can only
                // come from distinct slots; suffix until the triple is free.
                int bump = 1;
                while (!seen_triples.insert(topic.key()).second) {
                    topic.scenario = t.get<std::string>() + "_" + std::to_string(++bump);
                }
                universe.topics.push_back(std::move(topic));
            }
        }
    }
    return universe;
}

DatasetContext procedural_generate(const Topic& topic, std::uint64_t seed) {
    Rng rng(mix_seed(mix_seed(seed, topic.key()), "context"));
    const auto& pool = archetype_pool();

    std::vector<int> cont_idx, disc_idx;
    for (size_t i = 0; i < pool.size(); ++i) {
        (pool[i].continuous ? cont_idx : disc_idx).push_back(static_cast<int>(i));
    }

    const int d = 8 + static_cast<int>(rng.uniform_int(5)); // 8..12
    std::vector<int> chosen;
    // Guarantee at least one of each kind, then fill from the full pool.
    chosen.push_back(cont_idx[static_cast<size_t>(rng.uniform_int(cont_idx.size()))]);
    chosen.push_back(disc_idx[static_cast<size_t>(rng.uniform_int(disc_idx.size()))]);
    std::vector<int> rest;
    for (size_t i = 0; i < pool.size(); ++i) {
        int idx = static_cast<int>(i);
        if (idx != chosen[0] && idx != chosen[1]) rest.push_back(idx);
    }
    rng.shuffle(rest);
    for (int i = 0; i < d - 2; ++i) chosen.push_back(rest[static_cast<size_t>(i)]);
    rng.shuffle(chosen);

    const std::string scenario_text = humanize(topic.scenario);
    DatasetContext ctx;
    ctx.domain = topic.domain;
    ctx.topic = topic.scenario;
    ctx.description = "Synthetic records supporting " + scenario_text +
                      (topic.domain.empty() ? "" : " in the " + topic.domain + " domain") +
                      ". Each row is one observed instance.";
    for (int idx : chosen) {
        const Archetype& a = pool[static_cast<size_t>(idx)];
        FeatureSpec f;
        f.name = a.name;
        f.description = a.description + " for " + scenario_text + ".";
        if (a.continuous) {
            f.kind = ContinuousKind{a.lo, a.hi};
        } else {
            f.kind = DiscreteKind{a.categories};
        }
        ctx.features.push_back(std::move(f));
    }
    ctx.id = make_context_id(ctx);
    return ctx;
}

ContextCorpus generate_contexts(TextGenBackend& backend, const std::vector<Topic>& topics,
                                const ExpansionBudget& budget, std::uint64_t seed,
                                bool allow_procedural_fallback) {
    if (topics.empty()) throw ValidationError("generate_contexts: no topics");
    ProceduralBackend fallback;
    TextGenBackend* fb = allow_procedural_fallback ? &fallback : nullptr;
    const std::string sys = system_prompt();

    ContextCorpus corpus;
    std::set<std::string> seen_hashes;
    for (size_t ti = 0; ti < topics.size(); ++ti) {
        const Topic& topic = topics[ti];
        for (int slot = 0; slot < budget.contexts_per_topic; ++slot) {
            const std::uint64_t slot_seed =
                mix_seed(mix_seed(seed, "context", ti), static_cast<std::uint64_t>(slot));
            DatasetContext parsed;
            auto validator = [&](const std::string& text, json& out) -> std::string {
                json j;
                try {
                    j = json::parse(text);
                } catch (const json::parse_error& e) {
                    return std::string("invalid json: ") + e.what();
                }
                DatasetContext candidate;
                try {
                    candidate = context_from_json(j);
                } catch (const ValidationError& e) {
                    return e.what();
                }
                candidate.domain = topic.domain;
                candidate.topic = topic.scenario;
                candidate.id = make_context_id(candidate);
                auto report = validate_context(candidate);
                if (!report.empty()) {
                    return "invalid context: " + report.front().where + ": " +
                           report.front().reason;
                }
                parsed = std::move(candidate);
                out = std::move(j);
                return {};
            };
            auto outcome = generate_with_retry(backend, fb, "context",
                                               topic.key() + "#" + std::to_string(slot), sys,
                                               dataset_spec_prompt(topic.scenario),
                                               DecodeConfig{}, slot_seed, validator);
            corpus.log.push_back(outcome.record);

            const std::string content_hash = context_content_hash(parsed);
            if (!seen_hashes.insert(content_hash).second) {
                corpus.dedup_dropped.push_back(content_hash);
                continue;
            }
            GeneratedContext gc;
            gc.ctx = std::move(parsed);
            gc.topic = topic;
            gc.fallback = outcome.record.fallback;
            gc.attempts = outcome.record.attempts;
            gc.slot_seed = slot_seed;
            corpus.contexts.push_back(std::move(gc));
        }
    }
    return corpus;
}

} // namespace texr
