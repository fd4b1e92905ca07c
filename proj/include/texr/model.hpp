#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "texr/rng.hpp"
#include "texr/types.hpp"

namespace texr {

struct Hyperparams {
    int text_dim = 64; // h: feature-hashed embedding width
    int fourier = 8;   // F: sin/cos pairs for continuous values
    int mixture = 5;   // K: Gaussian components of the continuous head
    int width = 64;    // U: hidden width of projection/set/query layers
    double var_floor = 1e-4;
    double temp_init = 0.25; // initial cosine-logit temperature

    int value_dim() const { return std::max(2 * fourier, text_dim); }
    int token_dim() const { return text_dim + value_dim() + 1; }
    bool operator==(const Hyperparams&) const = default;
};

// Flat-parameter offsets; every layer is a view into one vector<double>.
struct ParamLayout {
    size_t w1, b1, e0, w2, b2, w3, b3, wq, bq, wc, bc, wd, bd, temp, total;
    static ParamLayout make(const Hyperparams& hp);
};

struct MixtureOfGaussians {
    std::vector<double> weights;
    std::vector<double> means; // raw feature units
    std::vector<double> vars;  // raw feature units squared

    double mean() const;
    double stddev() const;
    double log_pdf(double x) const;
};

struct CategoricalPmf {
    std::vector<double> probs;

    // Index-space moments; filtration scores discrete features through
    // discrete_surprise, not through these.
    double mean() const;
    double stddev() const;
};

using PredictiveDistribution = std::variant<MixtureOfGaussians, CategoricalPmf>;

double dist_mean(const PredictiveDistribution& d);
double dist_stddev(const PredictiveDistribution& d);

// The arbitrary-conditional model p(x_t | x_o, S). Parameters live in one
// flat array; serialization is bit-exact.
class ConditionalModel {
public:
    ConditionalModel(Hyperparams hp, std::uint64_t init_seed);

    const Hyperparams& hp() const { return hp_; }
    const ParamLayout& layout() const { return layout_; }
    std::span<const double> params() const { return params_; }
    std::span<double> params() { return params_; }
    size_t param_count() const { return params_.size(); }

    std::uint64_t training_seed() const { return training_seed_; }
    void set_training_seed(std::uint64_t s) { training_seed_ = s; }
    const std::string& manifest_hash() const { return manifest_hash_; }
    void set_manifest_hash(std::string h) { manifest_hash_ = std::move(h); }

    bool operator==(const ConditionalModel& other) const {
        return hp_ == other.hp_ && params_ == other.params_;
    }

private:
    Hyperparams hp_;
    ParamLayout layout_;
    std::vector<double> params_;
    std::uint64_t training_seed_ = 0;
    std::string manifest_hash_;
};

// Precomputed text embeddings for one context.
struct EncodedContext {
    const DatasetContext* ctx = nullptr;
    std::vector<std::vector<double>> desc_emb;              // per feature
    std::vector<std::vector<std::vector<double>>> cat_emb;  // per feature, per category
};

EncodedContext encode_context(const Hyperparams& hp, const DatasetContext& ctx);

struct ObservedValue {
    int feature = -1;
    Value value;
};

// The model-input encoding of one (row, mask, target) triple: a set of
// observed-feature tokens plus the target query embedding.
struct InstanceEncoding {
    std::vector<int> observed;                // ascending feature indices
    std::vector<std::vector<double>> tokens;  // one per observed feature
    std::vector<double> target_query;
    int target = -1;
};

InstanceEncoding encode_instance(const Hyperparams& hp, const DatasetContext& ctx, const Row& row,
                                 const std::vector<bool>& observed_mask, int target_index);

PredictiveDistribution predict(const ConditionalModel& model, const EncodedContext& enc,
                               std::span<const ObservedValue> observed, int target);
PredictiveDistribution predict(const ConditionalModel& model, const DatasetContext& ctx,
                               std::span<const ObservedValue> observed, int target);

// Negative log density/probability of `truth` under the conditional.
double target_nll(const ConditionalModel& model, const EncodedContext& enc,
                  std::span<const ObservedValue> observed, int target, const Value& truth);

// Adds scale * d(nll)/d(theta) into grad; returns the nll.
double target_nll_grad(const ConditionalModel& model, const EncodedContext& enc,
                       std::span<const ObservedValue> observed, int target, const Value& truth,
                       std::span<double> grad, double scale);

// Chain-rule joint log likelihood along a permutation, and its 1/d form.
double joint_loglik(const ConditionalModel& model, const EncodedContext& enc, const Row& row,
                    std::span<const int> permutation);
double joint_loglik_normalized(const ConditionalModel& model, const EncodedContext& enc,
                               const Row& row, std::span<const int> permutation);

// Autoregressive sampling along a permutation; continuous values clip into
// their declared range. (model, ctx, permutation, seed) determine the row.
Row sample_joint(const ConditionalModel& model, const EncodedContext& enc,
                 std::span<const int> permutation, std::uint64_t seed);

Value sample_from(const PredictiveDistribution& dist, const FeatureSpec& spec, Rng& rng);

// Uniform target, uniform observed-cardinality, uniform subset: every (o, t)
// pair has positive probability and the Prop.-1 weights come out exact.
struct MaskSampler {
    struct Mask {
        std::vector<int> observed; // ascending
        int target = -1;
    };

    explicit MaskSampler(std::uint64_t seed) : rng_(seed) {}
    Mask sample(int n_features) { return sample_with(rng_, n_features); }
    static Mask sample_with(Rng& rng, int n_features);

private:
    Rng rng_;
};

// Checkpoint container: magic, header (hyperparameters, seed, manifest
// hash), then the flat parameter array as little-endian doubles.
std::string serialize_model(const ConditionalModel& model);
ConditionalModel deserialize_model(const std::string& bytes);
void save_model(const ConditionalModel& model, const std::string& path);
ConditionalModel load_model(const std::string& path);

} // namespace texr
