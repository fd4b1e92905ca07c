#include "texr/text_backend.hpp"

#include "httplib.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "texr/archetypes.hpp"
#include "texr/bayes_net.hpp"
#include "texr/context.hpp"
#include "texr/errors.hpp"
#include "texr/expansion.hpp"
#include "texr/hash.hpp"
#include "texr/rng.hpp"

namespace texr {

using nlohmann::json;

std::string prompt_hash(const std::string& system_prompt, const std::string& user_prompt,
                        const DecodeConfig& decode) {
    std::string material = system_prompt;
    material.push_back('\x1f');
    material += user_prompt;
    material.push_back('\x1f');
    material += decode.seed ? std::to_string(*decode.seed) : "-";
    return sha256_hex(material);
}

// ---- Prompt templates ------------------------------------------------------

std::string system_prompt() {
    return "You MUST respond with ONLY valid JSON. No explanations, no extra text, no markdown.\n"
           "Start immediately with [ or {. End with ] or }. Nothing else.";
}

std::string domain_generation_prompt(int count, const std::string& category) {
    std::string c = std::to_string(count);
    return "Generate exactly " + c +
           " specific business domains/industries for the category: " + category +
           "\n\n"
           "Requirements:\n"
           "- Return ONLY a JSON array of domain names\n"
           "- Use specific, descriptive domain names (e.g., \"telemedicine\" not just "
           "\"healthcare\")\n"
           "- Avoid generic terms, be specific and modern\n"
           "- Include both traditional and emerging sub-domains\n"
           "- Make each domain unique and realistic\n\n"
           "Format: [\"domain1\", \"domain2\", \"domain3\"]\n\n"
           "Generate " + c + " domains now:";
}

std::string topic_generation_prompt(int count, const std::vector<std::string>& domains) {
    std::string joined;
    for (size_t i = 0; i < domains.size(); ++i) {
        if (i) joined += ", ";
        joined += domains[i];
    }
    std::string c = std::to_string(count);
    return "Generate exactly " + c + " dataset topics for: " + joined +
           "\n\n"
           "Format: [\"topic1\", \"topic2\", \"topic3\"]\n"
           "Examples: [\"customer_churn\", \"sales_data\", \"inventory_tracking\"]\n\n"
           "Generate " + c + " topics:";
}

std::string dataset_spec_prompt(const std::string& topic) {
    return "For topic '" + topic +
           "', create dataset specification.\n\n"
           "Return this JSON format:\n"
           "{\n"
           "  \"description\": \"Dataset description\",\n"
           "  \"features\": [\n"
           "    {\"name\": \"age\", \"type\": \"continuous\", \"description\": \"Age of the "
           "subject in years\", \"range\": [18, 80]},\n"
           "    {\"name\": \"category\", \"type\": \"discrete\", \"description\": "
           "\"Classification category\", \"categories\": [\"A\", \"B\", \"C\"]}\n"
           "  ]\n"
           "}\n\n"
           "Generate 8-12 realistic features for '" + topic +
           "'. Each feature MUST have a description explaining what it represents.";
}

std::string bn_structure_prompt(const std::vector<std::string>& feature_names) {
    std::string joined;
    for (size_t i = 0; i < feature_names.size(); ++i) {
        if (i) joined += ", ";
        joined += feature_names[i];
    }
    return "Create edges with for Bayesian Network with features in a topological order: " +
           joined +
           "\n\n"
           "Return edge list as JSON:\n"
           "[[\"parent1\", \"child1\"], [\"parent2\", \"child2\"]]";
}

std::string discrete_cpt_prompt(const std::string& node,
                                const std::vector<std::string>& categories,
                                const std::string& parent_config) {
    json cats = json::array();
    for (const auto& c : categories) cats.push_back(c);
    std::string head = "Generate probabilities for '" + node + "' categories: " + cats.dump();
    if (parent_config != "{}" && !parent_config.empty()) {
        head += ", parents: " + parent_config;
    }
    return head +
           "\n\n"
           "Return JSON:\n"
           "{\"cat1\": 0.0, \"cat2\": 0.0}\n\n"
           "Make probabilities sum to 1.0:";
}

std::string continuous_cpt_prompt(const std::string& node, double lo, double hi,
                                  const std::string& parent_config) {
    return "For feature '" + node + "' in range [" + format_double(lo) + ", " +
           format_double(hi) + "], parents: " + parent_config +
           ".\n"
           "Return probabilities for 4 quartiles as JSON array [p1, p2, p3, p4].\n"
           "Probabilities must sum to 1.";
}

// ---- Procedural backend ----------------------------------------------------

namespace {

std::uint64_t response_seed(const std::string& user_prompt, const DecodeConfig& decode) {
    return mix_seed(fnv1a64(user_prompt), decode.seed ? *decode.seed : 0x5EEDULL);
}

std::string first_line(const std::string& s, size_t from = 0) {
    size_t end = s.find('\n', from);
    return s.substr(from, end == std::string::npos ? std::string::npos : end - from);
}

// Extracts the text between `open` and `close`; npos-safe.
std::optional<std::string> between(const std::string& s, const std::string& open,
                                   const std::string& close) {
    size_t a = s.find(open);
    if (a == std::string::npos) return std::nullopt;
    a += open.size();
    size_t b = s.find(close, a);
    if (b == std::string::npos) return std::nullopt;
    return s.substr(a, b - a);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        size_t next = s.find(", ", pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            break;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + 2;
    }
    return out;
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

std::vector<std::pair<std::string, std::string>> parse_parent_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    if (text.empty() || text == "{}") return out;
    json j = json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
        out.emplace_back(it.key(), it.value().get<std::string>());
    }
    return out;
}

std::string respond_domains(const std::string& prompt, std::uint64_t seed) {
    auto count_text = between(prompt, "Generate exactly ", " specific");
    auto category = between(prompt, "for the category: ", "\n");
    if (!count_text || !category) throw BackendError("procedural: unparseable domain prompt");
    int count = std::stoi(*count_text);
    Rng rng(mix_seed(seed, "domains"));
    const auto& pool = domain_word_pool();
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    json arr = json::array();
    for (int i = 0; i < count; ++i) {
        if (i < static_cast<int>(pool.size())) {
            arr.push_back(pool[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        } else {
            arr.push_back(slugify(*category) + " segment " + std::to_string(i + 1));
        }
    }
    return arr.dump();
}

std::string respond_topics(const std::string& prompt, std::uint64_t seed) {
    auto count_text = between(prompt, "Generate exactly ", " dataset topics");
    auto domains = between(prompt, "dataset topics for: ", "\n");
    if (!count_text || !domains) throw BackendError("procedural: unparseable topic prompt");
    int count = std::stoi(*count_text);
    Rng rng(mix_seed(seed, "topics"));
    const auto& pool = scenario_pool();
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    json arr = json::array();
    for (int i = 0; i < count; ++i) {
        size_t idx = static_cast<size_t>(i) % pool.size();
        std::string topic = pool[static_cast<size_t>(order[idx])];
        if (static_cast<size_t>(i) >= pool.size()) {
            topic += "_" + std::to_string(i / pool.size() + 1);
        }
        arr.push_back(topic);
    }
    return arr.dump();
}

std::string respond_spec(const std::string& prompt, std::uint64_t seed) {
    auto topic = between(prompt, "For topic '", "', create dataset specification.");
    if (!topic) throw BackendError("procedural: unparseable spec prompt");
    DatasetContext ctx = procedural_generate(Topic{"", "", *topic}, seed);
    json j;
    j["description"] = ctx.description;
    j["features"] = json::array();
    json body = context_to_json(ctx);
    j["features"] = body["features"];
    return j.dump();
}

std::string respond_edges(const std::string& prompt, std::uint64_t seed,
                          const ProceduralBackend::Params& params) {
    auto names_text = between(prompt, "features in a topological order: ", "\n");
    if (!names_text) throw BackendError("procedural: unparseable bn prompt");
    auto names = split_list(*names_text);
    json arr = json::array();
    for (const auto& [p, c] :
         procedural_edges(static_cast<int>(names.size()), seed, params.parent_cap)) {
        arr.push_back(json::array({names[static_cast<size_t>(p)], names[static_cast<size_t>(c)]}));
    }
    return arr.dump();
}

std::string respond_discrete_cpt(const std::string& prompt, std::uint64_t seed,
                                 const ProceduralBackend::Params& params) {
    auto node = between(prompt, "Generate probabilities for '", "' categories: ");
    if (!node) throw BackendError("procedural: unparseable discrete cpt prompt");
    std::string head = first_line(prompt);
    size_t cats_begin = head.find("' categories: ");
    cats_begin += std::string("' categories: ").size();
    size_t parents_at = head.rfind(", parents: ");
    std::string cats_text, parents_text = "{}";
    if (parents_at != std::string::npos && parents_at > cats_begin) {
        cats_text = head.substr(cats_begin, parents_at - cats_begin);
        parents_text = head.substr(parents_at + std::string(", parents: ").size());
    } else {
        cats_text = head.substr(cats_begin);
    }
    std::vector<std::string> categories;
    for (const auto& c : json::parse(cats_text)) categories.push_back(c.get<std::string>());
    auto parents = parse_parent_config(parents_text);

    std::vector<double> pmf = discrete_tendency(*node, categories.size());
    double tilt = config_tilt(*node, parents);
    const double n = static_cast<double>(categories.size());
    double total = 0.0;
    for (size_t i = 0; i < pmf.size(); ++i) {
        double s = n > 1 ? 2.0 * static_cast<double>(i) / (n - 1.0) - 1.0 : 0.0;
        pmf[i] *= std::exp(0.9 * tilt * s);
        total += pmf[i];
    }
    for (auto& p : pmf) p /= total;

    Rng rng(mix_seed(seed, "dcpt"));
    std::vector<double> alphas(pmf.size());
    for (size_t i = 0; i < pmf.size(); ++i) {
        alphas[i] = params.pmf_concentration * pmf[i] + 0.02;
    }
    pmf = rng.dirichlet(alphas);

    json obj = json::object();
    for (size_t i = 0; i < categories.size(); ++i) obj[categories[i]] = round6(pmf[i]);
    return obj.dump();
}

std::string respond_continuous_cpt(const std::string& prompt, std::uint64_t seed,
                                   const ProceduralBackend::Params& params) {
    auto node = between(prompt, "For feature '", "' in range [");
    auto range_text = between(prompt, "' in range [", "], parents: ");
    auto parents_text = between(prompt, "], parents: ", ".\n");
    if (!node || !range_text || !parents_text) {
        throw BackendError("procedural: unparseable continuous cpt prompt");
    }
    auto parents = parse_parent_config(*parents_text);

    ContinuousTendency t = continuous_tendency(*node);
    double tilt = config_tilt(*node, parents);
    Rng rng(mix_seed(seed, "ccpt"));
    double loc = std::clamp(t.loc + 0.30 * tilt + params.mean_jitter * rng.normal(), 0.03, 0.97);
    double scale = std::clamp(t.scale * std::exp(0.25 * rng.normal()), 0.02, 0.40);
    auto qp = quartile_probs_from_gaussian(loc, scale);

    std::vector<double> alphas(4);
    for (size_t i = 0; i < 4; ++i) {
        alphas[i] = 4.0 * params.pmf_concentration * qp[i] + 0.02;
    }
    auto probs = rng.dirichlet(alphas);
    json arr = json::array();
    for (double p : probs) arr.push_back(round6(p));
    return arr.dump();
}

} // namespace

std::string ProceduralBackend::generate(const std::string& system, const std::string& user,
                                        const DecodeConfig& decode) {
    (void)system;
    const std::uint64_t seed = response_seed(user, decode);
    if (user.find(" specific business domains/industries for the category: ") !=
        std::string::npos) {
        return respond_domains(user, seed);
    }
    if (user.find(" dataset topics for: ") != std::string::npos) {
        return respond_topics(user, seed);
    }
    if (user.rfind("For topic '", 0) == 0) {
        return respond_spec(user, seed);
    }
    if (user.rfind("Create edges with for Bayesian Network", 0) == 0) {
        return respond_edges(user, seed, params_);
    }
    if (user.rfind("Generate probabilities for '", 0) == 0) {
        return respond_discrete_cpt(user, seed, params_);
    }
    if (user.rfind("For feature '", 0) == 0) {
        return respond_continuous_cpt(user, seed, params_);
    }
    throw BackendError("procedural backend: unknown prompt kind");
}

// ---- Replay / record -------------------------------------------------------

std::string ReplayBackend::generate(const std::string& system, const std::string& user,
                                    const DecodeConfig& decode) {
    const std::string key = prompt_hash(system, user, decode);
    const std::string path = dir_ + "/" + key + ".json";
    if (!std::filesystem::exists(path)) {
        throw BackendError("replay fixture missing: " + path, key);
    }
    json j = json::parse(read_file(path));
    return j.at("response").get<std::string>();
}

void record_response(const std::string& dir, const std::string& system_prompt,
                     const std::string& user_prompt, const DecodeConfig& decode,
                     const std::string& response) {
    std::filesystem::create_directories(dir);
    const std::string key = prompt_hash(system_prompt, user_prompt, decode);
    json j;
    j["system"] = system_prompt;
    j["user"] = user_prompt;
    j["seed"] = decode.seed ? json(*decode.seed) : json(nullptr);
    j["response"] = response;
    write_file(dir + "/" + key + ".json", j.dump(2) + "\n");
}

// ---- HTTP backend ----------------------------------------------------------

std::string HttpBackend::generate(const std::string& system, const std::string& user,
                                  const DecodeConfig& decode) {
    size_t scheme = cfg_.url.find("://");
    if (scheme == std::string::npos) throw BackendError("bad backend url: " + cfg_.url);
    size_t path_at = cfg_.url.find('/', scheme + 3);
    std::string base = path_at == std::string::npos ? cfg_.url : cfg_.url.substr(0, path_at);
    std::string path = path_at == std::string::npos ? "/" : cfg_.url.substr(path_at);

    json body;
    body["model"] = cfg_.model;
    body["messages"] = json::array({
        json{{"role", "system"}, {"content", system}},
        json{{"role", "user"}, {"content", user}},
    });
    body["temperature"] = decode.temperature;
    body["top_p"] = decode.top_p;
    body["max_tokens"] = decode.max_new_tokens;
    if (decode.seed) body["seed"] = *decode.seed;

    httplib::Client client(base);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        throw BackendError("backend unreachable: " + cfg_.url,
                           prompt_hash(system, user, decode));
    }
    if (res->status != 200) {
        throw BackendError("backend returned status " + std::to_string(res->status),
                           prompt_hash(system, user, decode));
    }
    std::string content;
    try {
        json j = json::parse(res->body);
        content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw BackendError(std::string("malformed backend response: ") + e.what(),
                           prompt_hash(system, user, decode));
    }
    if (!cfg_.record_dir.empty()) {
        record_response(cfg_.record_dir, system, user, decode, content);
    }
    return content;
}

// ---- Retry + validation ----------------------------------------------------

GenOutcome generate_with_retry(TextGenBackend& backend, TextGenBackend* fallback,
                               const std::string& kind, const std::string& key,
                               const std::string& system_prompt_text,
                               const std::string& user_prompt, const DecodeConfig& decode,
                               std::uint64_t slot_seed, const ResponseValidator& validate) {
    SlotRecord rec;
    rec.kind = kind;
    rec.key = key;
    for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
        DecodeConfig d = decode;
        d.seed = mix_seed(slot_seed, static_cast<std::uint64_t>(attempt));
        rec.prompt_hash = prompt_hash(system_prompt_text, user_prompt, d);
        ++rec.attempts;
        std::string text;
        try {
            text = backend.generate(system_prompt_text, user_prompt, d);
        } catch (const BackendError&) {
            continue;
        }
        nlohmann::json out;
        std::string err = validate(text, out);
        if (err.empty()) {
            rec.ok = true;
            return {std::move(out), std::move(rec)};
        }
    }
    if (fallback != nullptr) {
        DecodeConfig d = decode;
        d.seed = mix_seed(slot_seed, 0xFA11BACCULL);
        std::string text = fallback->generate(system_prompt_text, user_prompt, d);
        nlohmann::json out;
        std::string err = validate(text, out);
        if (!err.empty()) {
            throw BackendError("procedural fallback invalid for " + kind + "/" + key + ": " + err,
                               rec.prompt_hash);
        }
        rec.ok = true;
        rec.fallback = true;
        return {std::move(out), std::move(rec)};
    }
    throw BackendError("backend failed after retries for " + kind + "/" + key, rec.prompt_hash);
}

} // namespace texr
