#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "texr/text_backend.hpp"
#include "texr/types.hpp"

namespace texr {

struct Topic {
    std::string category; // high-level domain
    std::string domain;   // sub-field
    std::string scenario; // concrete predictive task
    bool operator==(const Topic&) const = default;

    std::string key() const { return category + "/" + domain + "/" + scenario; }
};

struct ExpansionBudget {
    int n_categories = 25;
    int domains_per_category = 4;
    int topics_per_domain = 5;
    int contexts_per_topic = 20;
    int rows_per_dataset = 1000;

    bool valid() const {
        return n_categories > 0 && domains_per_category > 0 && topics_per_domain > 0 &&
               contexts_per_topic > 0 && rows_per_dataset > 0;
    }
    long long topic_target() const {
        return 1LL * n_categories * domains_per_category * topics_per_domain;
    }
    long long corpus_target() const { return topic_target() * contexts_per_topic; }
};

struct TopicUniverse {
    std::vector<Topic> topics;
    GenerationLog log;
};

// Category -> domains -> topics, through the backend prompts, with the
// module-wide retry rule and per-slot procedural fallback. Returns exactly
// the budget's topic count, entries distinct.
TopicUniverse build_topic_universe(TextGenBackend& backend, const ExpansionBudget& budget,
                                   std::uint64_t seed, bool allow_procedural_fallback = true);

struct GeneratedContext {
    DatasetContext ctx;
    Topic topic;
    bool fallback = false;
    int attempts = 0;
    std::uint64_t slot_seed = 0;
};

struct ContextCorpus {
    std::vector<GeneratedContext> contexts;
    GenerationLog log;
    std::vector<std::string> dedup_dropped; // content hashes of dropped duplicates
};

// contexts_per_topic contexts for each topic, every one passing
// validate_context; duplicates (by content hash) are dropped and logged.
ContextCorpus generate_contexts(TextGenBackend& backend, const std::vector<Topic>& topics,
                                const ExpansionBudget& budget, std::uint64_t seed,
                                bool allow_procedural_fallback = true);

// Deterministic offline context synthesis: 8-12 features mixing both kinds,
// names and tendencies drawn from the archetype pool, descriptions templated
// from the topic.
DatasetContext procedural_generate(const Topic& topic, std::uint64_t seed);

} // namespace texr
