#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace texr {

struct DecodeConfig {
    double temperature = 0.7;
    double top_p = 0.95;
    int max_new_tokens = 2048;
    std::optional<std::uint64_t> seed;
};

// Text-in/text-out generation contract. JSON post-validation happens at the
// call sites, so one backend serves every prompt kind.
class TextGenBackend {
public:
    virtual ~TextGenBackend() = default;
    virtual std::string generate(const std::string& system_prompt,
                                 const std::string& user_prompt,
                                 const DecodeConfig& decode) = 0;
    virtual std::string backend_id() const = 0;
};

// Identity of a request; also the replay fixture key.
std::string prompt_hash(const std::string& system_prompt, const std::string& user_prompt,
                        const DecodeConfig& decode);

// ---- Prompt templates ------------------------------------------------------

std::string system_prompt();
std::string domain_generation_prompt(int count, const std::string& category);
std::string topic_generation_prompt(int count, const std::vector<std::string>& domains);
std::string dataset_spec_prompt(const std::string& topic);
std::string bn_structure_prompt(const std::vector<std::string>& feature_names);
// parent_config is a rendered config string, "{}" when the node has no
// parents; category values verbatim, continuous parents as "Q1".."Q4".
std::string discrete_cpt_prompt(const std::string& node,
                                const std::vector<std::string>& categories,
                                const std::string& parent_config);
std::string continuous_cpt_prompt(const std::string& node, double lo, double hi,
                                  const std::string& parent_config);

// ---- Backends --------------------------------------------------------------

// Deterministic offline surrogate for the LLM. Recognizes the prompt
// templates above and answers with valid JSON derived from the archetype
// pool; the response is a pure function of (prompts, decode.seed).
class ProceduralBackend : public TextGenBackend {
public:
    struct Params {
        double pmf_concentration = 12.0; // Dirichlet sharpness of CPT rows
        double mean_jitter = 0.10;       // stddev of the loc shift, normalized units
        int parent_cap = 3;
    };

    ProceduralBackend() = default;
    explicit ProceduralBackend(Params params) : params_(params) {}

    std::string generate(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeConfig& decode) override;
    std::string backend_id() const override { return "procedural"; }

    const Params& params() const { return params_; }

private:
    Params params_;
};

// Replays recorded responses from a fixture directory keyed by prompt hash.
class ReplayBackend : public TextGenBackend {
public:
    explicit ReplayBackend(std::string fixture_dir) : dir_(std::move(fixture_dir)) {}
    std::string generate(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeConfig& decode) override;
    std::string backend_id() const override { return "replay"; }

private:
    std::string dir_;
};

// Chat-completion-style HTTP backend. Records every response into
// record_dir as <prompt-hash>.json so runs can be replayed offline.
class HttpBackend : public TextGenBackend {
public:
    struct Config {
        std::string url;       // e.g. http://host:port/v1/chat/completions
        std::string model;
        std::string token_env = "TEXR_API_TOKEN";
        std::string record_dir; // empty = no recording
        int timeout_seconds = 120;
    };

    explicit HttpBackend(Config cfg) : cfg_(std::move(cfg)) {}
    std::string generate(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeConfig& decode) override;
    std::string backend_id() const override { return "remote:" + cfg_.model; }

private:
    Config cfg_;
};

void record_response(const std::string& dir, const std::string& system_prompt,
                     const std::string& user_prompt, const DecodeConfig& decode,
                     const std::string& response);

// ---- Retry + validation ----------------------------------------------------

// Per-slot generation provenance; "unaccounted" slots do not exist by
// construction because every slot yields exactly one record.
struct SlotRecord {
    std::string kind;
    std::string key;
    int attempts = 0;
    bool fallback = false;
    bool ok = false;
    std::string prompt_hash;
};

using GenerationLog = std::vector<SlotRecord>;

// Returns an error message, or empty and fills `out` with the parsed value.
using ResponseValidator = std::function<std::string(const std::string& text, nlohmann::json& out)>;

inline constexpr int kMaxGenerationAttempts = 4; // initial call plus three retries

struct GenOutcome {
    nlohmann::json value;
    SlotRecord record;
};

// Runs the validated-generation protocol: up to kMaxGenerationAttempts calls
// with per-attempt seeds, then the procedural fallback (flagged) when
// configured, else a BackendError carrying the failing prompt hash.
GenOutcome generate_with_retry(TextGenBackend& backend, TextGenBackend* fallback,
                               const std::string& kind, const std::string& key,
                               const std::string& system_prompt, const std::string& user_prompt,
                               const DecodeConfig& decode, std::uint64_t slot_seed,
                               const ResponseValidator& validate);

} // namespace texr
