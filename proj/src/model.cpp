#include "texr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "texr/context.hpp"
#include "texr/encoding.hpp"
#include "texr/errors.hpp"
#include "texr/hash.hpp"

namespace texr {

using nlohmann::json;

ParamLayout ParamLayout::make(const Hyperparams& hp) {
    const size_t T = static_cast<size_t>(hp.token_dim());
    const size_t U = static_cast<size_t>(hp.width);
    const size_t h = static_cast<size_t>(hp.text_dim);
    const size_t K = static_cast<size_t>(hp.mixture);
    ParamLayout L{};
    size_t at = 0;
    L.w1 = at; at += U * T;
    L.b1 = at; at += U;
    L.e0 = at; at += U;
    L.w2 = at; at += U * U;
    L.b2 = at; at += U;
    L.w3 = at; at += U * U;
    L.b3 = at; at += U;
    L.wq = at; at += U * (U + h);
    L.bq = at; at += U;
    L.wc = at; at += 3 * K * U;
    L.bc = at; at += 3 * K;
    L.wd = at; at += h * U;
    L.bd = at; at += h;
    L.temp = at; at += 1;
    L.total = at;
    return L;
}

// ---- Predictive distributions ----------------------------------------------

double MixtureOfGaussians::mean() const {
    double m = 0.0;
    for (size_t k = 0; k < weights.size(); ++k) m += weights[k] * means[k];
    return m;
}

double MixtureOfGaussians::stddev() const {
    double m = mean();
    double second = 0.0;
    for (size_t k = 0; k < weights.size(); ++k) {
        second += weights[k] * (vars[k] + means[k] * means[k]);
    }
    return std::sqrt(std::max(second - m * m, 0.0));
}

double MixtureOfGaussians::log_pdf(double x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> r(weights.size());
    for (size_t k = 0; k < weights.size(); ++k) {
        double delta = x - means[k];
        r[k] = std::log(std::max(weights[k], 1e-300)) - 0.5 * std::log(2.0 * M_PI * vars[k]) -
               delta * delta / (2.0 * vars[k]);
        best = std::max(best, r[k]);
    }
    double acc = 0.0;
    for (double v : r) acc += std::exp(v - best);
    return best + std::log(acc);
}

double CategoricalPmf::mean() const {
    double m = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) m += probs[i] * static_cast<double>(i);
    return m;
}

double CategoricalPmf::stddev() const {
    double m = mean();
    double second = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        second += probs[i] * static_cast<double>(i) * static_cast<double>(i);
    }
    return std::sqrt(std::max(second - m * m, 0.0));
}

double dist_mean(const PredictiveDistribution& d) {
    return std::visit([](const auto& v) { return v.mean(); }, d);
}

double dist_stddev(const PredictiveDistribution& d) {
    return std::visit([](const auto& v) { return v.stddev(); }, d);
}

// ---- Model -----------------------------------------------------------------

ConditionalModel::ConditionalModel(Hyperparams hp, std::uint64_t init_seed)
    : hp_(hp), layout_(ParamLayout::make(hp)), params_(layout_.total, 0.0) {
    Rng rng(mix_seed(init_seed, "model_init"));
    auto glorot = [&](size_t at, size_t rows, size_t cols) {
        double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (size_t i = 0; i < rows * cols; ++i) {
            params_[at + i] = rng.uniform(-lim, lim);
        }
    };
    const size_t T = static_cast<size_t>(hp.token_dim());
    const size_t U = static_cast<size_t>(hp.width);
    const size_t H = static_cast<size_t>(hp.text_dim);
    const size_t K = static_cast<size_t>(hp.mixture);
    glorot(layout_.w1, U, T);
    glorot(layout_.w2, U, U);
    glorot(layout_.w3, U, U);
    glorot(layout_.wq, U, U + H);
    glorot(layout_.wc, 3 * K, U);
    glorot(layout_.wd, H, U);
    for (size_t i = 0; i < U; ++i) params_[layout_.e0 + i] = 0.01 * rng.normal();
    // Mixture head bias: means spread across the normalized range, moderate
    // starting variance. Weight logits stay at zero (uniform mixture).
    for (size_t k = 0; k < K; ++k) {
        params_[layout_.bc + K + k] = (static_cast<double>(k) + 0.5) / static_cast<double>(K);
        params_[layout_.bc + 2 * K + k] = std::log(0.0625);
    }
    params_[layout_.temp] = std::log(hp.temp_init);
}

EncodedContext encode_context(const Hyperparams& hp, const DatasetContext& ctx) {
    EncodedContext enc;
    enc.ctx = &ctx;
    enc.desc_emb.reserve(ctx.features.size());
    enc.cat_emb.resize(ctx.features.size());
    for (size_t i = 0; i < ctx.features.size(); ++i) {
        const auto& f = ctx.features[i];
        enc.desc_emb.push_back(embed_text(f.name + " " + f.description, hp.text_dim));
        if (const auto* dk = std::get_if<DiscreteKind>(&f.kind)) {
            for (const auto& c : dk->categories) {
                enc.cat_emb[i].push_back(embed_text(c, hp.text_dim));
            }
        }
    }
    return enc;
}

namespace {

int category_index(const FeatureSpec& spec, const std::string& cat) {
    const auto& cats = std::get<DiscreteKind>(spec.kind).categories;
    auto it = std::find(cats.begin(), cats.end(), cat);
    if (it == cats.end()) {
        throw ValidationError("category '" + cat + "' not in domain of '" + spec.name + "'");
    }
    return static_cast<int>(it - cats.begin());
}

std::vector<double> build_token(const Hyperparams& hp, const EncodedContext& enc, int feature,
                                const Value& value) {
    const auto& spec = enc.ctx->features[static_cast<size_t>(feature)];
    std::vector<double> x;
    x.reserve(static_cast<size_t>(hp.token_dim()));
    const auto& demb = enc.desc_emb[static_cast<size_t>(feature)];
    x.insert(x.end(), demb.begin(), demb.end());
    const size_t value_at = x.size();
    x.resize(value_at + static_cast<size_t>(hp.value_dim()), 0.0);
    if (const auto* ck = std::get_if<ContinuousKind>(&spec.kind)) {
        auto fe = fourier_encode(number_of(value), ck->lo, ck->hi, hp.fourier);
        std::copy(fe.begin(), fe.end(), x.begin() + static_cast<std::ptrdiff_t>(value_at));
    } else {
        int ci = category_index(spec, category_of(value));
        const auto& cemb = enc.cat_emb[static_cast<size_t>(feature)][static_cast<size_t>(ci)];
        std::copy(cemb.begin(), cemb.end(), x.begin() + static_cast<std::ptrdiff_t>(value_at));
    }
    x.push_back(1.0); // observed flag
    return x;
}

// y = W x + b, W stored row-major (rows x cols).
void affine(const double* W, const double* b, const double* x, double* y, size_t rows,
            size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double acc = b ? b[r] : 0.0;
        const double* wr = W + r * cols;
        for (size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

// dW += dy x^T ; db += dy ; dx += W^T dy (dx may be null)
void affine_backward(const double* W, const double* x, const double* dy, double* dW, double* db,
                     double* dx, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        const double g = dy[r];
        double* dwr = dW + r * cols;
        const double* wr = W + r * cols;
        for (size_t c = 0; c < cols; ++c) {
            dwr[c] += g * x[c];
            if (dx) dx[c] += wr[c] * g;
        }
        if (db) db[r] += g;
    }
}

void softmax_inplace(std::vector<double>& v) {
    double best = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (auto& x : v) {
        x = std::exp(x - best);
        sum += x;
    }
    for (auto& x : v) x /= sum;
}

struct ForwardCache {
    std::vector<std::vector<double>> x; // token inputs
    std::vector<std::vector<double>> a; // token activations
    bool empty_set = false;
    std::vector<double> m, g, z, cat_in, u;
    // continuous head (normalized space)
    std::vector<double> head, omega, mu, var;
    // discrete head
    std::vector<double> e, cosines, pmf;
    double e_norm = 0.0;
};

std::vector<ObservedValue> sorted_observed(std::span<const ObservedValue> observed) {
    std::vector<ObservedValue> sorted(observed.begin(), observed.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const ObservedValue& a, const ObservedValue& b) { return a.feature < b.feature; });
    return sorted;
}

void run_forward(const ConditionalModel& model, const EncodedContext& enc,
                 std::span<const ObservedValue> observed_sorted, int target, ForwardCache& fc) {
    const auto& hp = model.hp();
    const auto& L = model.layout();
    const double* P = model.params().data();
    const size_t T = static_cast<size_t>(hp.token_dim());
    const size_t U = static_cast<size_t>(hp.width);
    const size_t H = static_cast<size_t>(hp.text_dim);
    const size_t K = static_cast<size_t>(hp.mixture);

    fc.x.clear();
    fc.a.clear();
    for (const auto& ov : observed_sorted) {
        fc.x.push_back(build_token(hp, enc, ov.feature, ov.value));
        std::vector<double> act(U);
        affine(P + L.w1, P + L.b1, fc.x.back().data(), act.data(), U, T);
        for (auto& v : act) v = std::tanh(v);
        fc.a.push_back(std::move(act));
    }

    fc.m.assign(U, 0.0);
    fc.empty_set = fc.a.empty();
    if (fc.empty_set) {
        std::copy(P + L.e0, P + L.e0 + U, fc.m.begin());
    } else {
        for (const auto& a : fc.a) {
            for (size_t i = 0; i < U; ++i) fc.m[i] += a[i];
        }
        const double inv = 1.0 / static_cast<double>(fc.a.size());
        for (auto& v : fc.m) v *= inv;
    }

    fc.g.assign(U, 0.0);
    affine(P + L.w2, P + L.b2, fc.m.data(), fc.g.data(), U, U);
    for (auto& v : fc.g) v = std::tanh(v);
    fc.z.assign(U, 0.0);
    affine(P + L.w3, P + L.b3, fc.g.data(), fc.z.data(), U, U);

    fc.cat_in.assign(U + H, 0.0);
    std::copy(fc.z.begin(), fc.z.end(), fc.cat_in.begin());
    const auto& q = enc.desc_emb[static_cast<size_t>(target)];
    std::copy(q.begin(), q.end(), fc.cat_in.begin() + static_cast<std::ptrdiff_t>(U));
    fc.u.assign(U, 0.0);
    affine(P + L.wq, P + L.bq, fc.cat_in.data(), fc.u.data(), U, U + H);
    for (auto& v : fc.u) v = std::tanh(v);

    const auto& spec = enc.ctx->features[static_cast<size_t>(target)];
    if (is_continuous(spec.kind)) {
        fc.head.assign(3 * K, 0.0);
        affine(P + L.wc, P + L.bc, fc.u.data(), fc.head.data(), 3 * K, U);
        fc.omega.assign(fc.head.begin(), fc.head.begin() + static_cast<std::ptrdiff_t>(K));
        softmax_inplace(fc.omega);
        fc.mu.assign(fc.head.begin() + static_cast<std::ptrdiff_t>(K),
                     fc.head.begin() + static_cast<std::ptrdiff_t>(2 * K));
        fc.var.assign(K, 0.0);
        for (size_t k = 0; k < K; ++k) {
            double s = std::clamp(fc.head[2 * K + k], -30.0, 15.0);
            fc.var[k] = hp.var_floor + std::exp(s);
        }
    } else {
        fc.e.assign(H, 0.0);
        affine(P + L.wd, P + L.bd, fc.u.data(), fc.e.data(), H, U);
        double norm2 = 0.0;
        for (double v : fc.e) norm2 += v * v;
        fc.e_norm = std::sqrt(norm2);
        const auto& cats = enc.cat_emb[static_cast<size_t>(target)];
        const double tau = std::exp(P[L.temp]);
        fc.cosines.assign(cats.size(), 0.0);
        fc.pmf.assign(cats.size(), 0.0);
        for (size_t i = 0; i < cats.size(); ++i) {
            double dot = 0.0, cn2 = 0.0;
            for (size_t j = 0; j < H; ++j) {
                dot += fc.e[j] * cats[i][j];
                cn2 += cats[i][j] * cats[i][j];
            }
            double denom = fc.e_norm * std::sqrt(cn2) + 1e-12;
            fc.cosines[i] = dot / denom;
            fc.pmf[i] = tau * fc.cosines[i];
        }
        softmax_inplace(fc.pmf);
    }
}

void validate_query(const EncodedContext& enc, std::span<const ObservedValue> observed,
                    int target) {
    const int d = static_cast<int>(enc.ctx->features.size());
    if (target < 0 || target >= d) throw ValidationError("predict: unknown feature index");
    for (const auto& ov : observed) {
        if (ov.feature < 0 || ov.feature >= d) {
            throw ValidationError("predict: unknown observed feature index");
        }
        if (ov.feature == target) {
            throw ValidationError("predict: target is inside the observed set");
        }
    }
}

} // namespace

InstanceEncoding encode_instance(const Hyperparams& hp, const DatasetContext& ctx, const Row& row,
                                 const std::vector<bool>& observed_mask, int target_index) {
    if (target_index < 0 || target_index >= static_cast<int>(ctx.features.size())) {
        throw ValidationError("encode_instance: target index out of range");
    }
    if (observed_mask.size() != ctx.features.size()) {
        throw ValidationError("encode_instance: mask arity mismatch");
    }
    if (observed_mask[static_cast<size_t>(target_index)]) {
        throw ValidationError("encode_instance: target is inside the observed set");
    }
    EncodedContext enc = encode_context(hp, ctx);
    InstanceEncoding ie;
    ie.target = target_index;
    ie.target_query = enc.desc_emb[static_cast<size_t>(target_index)];
    for (size_t f = 0; f < ctx.features.size(); ++f) {
        if (!observed_mask[f]) continue;
        ie.observed.push_back(static_cast<int>(f));
        ie.tokens.push_back(build_token(hp, enc, static_cast<int>(f), row[f]));
    }
    return ie;
}

PredictiveDistribution predict(const ConditionalModel& model, const EncodedContext& enc,
                               std::span<const ObservedValue> observed, int target) {
    validate_query(enc, observed, target);
    auto sorted = sorted_observed(observed);
    ForwardCache fc;
    run_forward(model, enc, sorted, target, fc);
    const auto& spec = enc.ctx->features[static_cast<size_t>(target)];
    if (const auto* ck = std::get_if<ContinuousKind>(&spec.kind)) {
        const double w = ck->hi - ck->lo;
        MixtureOfGaussians mog;
        mog.weights = fc.omega;
        for (size_t k = 0; k < fc.mu.size(); ++k) {
            mog.means.push_back(ck->lo + fc.mu[k] * w);
            mog.vars.push_back(fc.var[k] * w * w);
        }
        return mog;
    }
    return CategoricalPmf{fc.pmf};
}

PredictiveDistribution predict(const ConditionalModel& model, const DatasetContext& ctx,
                               std::span<const ObservedValue> observed, int target) {
    EncodedContext enc = encode_context(model.hp(), ctx);
    return predict(model, enc, observed, target);
}

namespace {

double nll_from_cache(const ConditionalModel& model, const EncodedContext& enc,
                      const ForwardCache& fc, int target, const Value& truth,
                      std::vector<double>* responsibilities, double* u_val_out) {
    const auto& spec = enc.ctx->features[static_cast<size_t>(target)];
    if (const auto* ck = std::get_if<ContinuousKind>(&spec.kind)) {
        const size_t K = fc.omega.size();
        const double w = ck->hi - ck->lo;
        const double u_val = (number_of(truth) - ck->lo) / w;
        if (u_val_out) *u_val_out = u_val;
        std::vector<double> r(K);
        double best = -std::numeric_limits<double>::infinity();
        for (size_t k = 0; k < K; ++k) {
            double delta = u_val - fc.mu[k];
            r[k] = std::log(std::max(fc.omega[k], 1e-300)) -
                   0.5 * std::log(2.0 * M_PI * fc.var[k]) - delta * delta / (2.0 * fc.var[k]);
            best = std::max(best, r[k]);
        }
        double acc = 0.0;
        for (double v : r) acc += std::exp(v - best);
        const double logp = best + std::log(acc);
        if (responsibilities) {
            responsibilities->assign(K, 0.0);
            for (size_t k = 0; k < K; ++k) (*responsibilities)[k] = std::exp(r[k] - logp);
        }
        return -logp + std::log(w);
    }
    (void)model;
    int y = category_index(spec, category_of(truth));
    return -std::log(std::max(fc.pmf[static_cast<size_t>(y)], 1e-300));
}

} // namespace

double target_nll(const ConditionalModel& model, const EncodedContext& enc,
                  std::span<const ObservedValue> observed, int target, const Value& truth) {
    validate_query(enc, observed, target);
    auto sorted = sorted_observed(observed);
    ForwardCache fc;
    run_forward(model, enc, sorted, target, fc);
    return nll_from_cache(model, enc, fc, target, truth, nullptr, nullptr);
}

double target_nll_grad(const ConditionalModel& model, const EncodedContext& enc,
                       std::span<const ObservedValue> observed, int target, const Value& truth,
                       std::span<double> grad, double scale) {
    validate_query(enc, observed, target);
    auto sorted = sorted_observed(observed);
    ForwardCache fc;
    run_forward(model, enc, sorted, target, fc);

    const auto& hp = model.hp();
    const auto& L = model.layout();
    const double* P = model.params().data();
    double* G = grad.data();
    const size_t T = static_cast<size_t>(hp.token_dim());
    const size_t U = static_cast<size_t>(hp.width);
    const size_t H = static_cast<size_t>(hp.text_dim);
    const size_t K = static_cast<size_t>(hp.mixture);

    std::vector<double> du(U, 0.0);
    const auto& spec = enc.ctx->features[static_cast<size_t>(target)];

    std::vector<double> gamma;
    double u_val = 0.0;
    const double nll = nll_from_cache(model, enc, fc, target, truth, &gamma, &u_val);

    if (is_continuous(spec.kind)) {
        std::vector<double> dhead(3 * K, 0.0);
        for (size_t k = 0; k < K; ++k) {
            const double delta = u_val - fc.mu[k];
            const double var = fc.var[k];
            dhead[k] = scale * (fc.omega[k] - gamma[k]);
            dhead[K + k] = scale * (-gamma[k] * delta / var);
            const double dvar = gamma[k] * (0.5 / var - delta * delta / (2.0 * var * var));
            dhead[2 * K + k] = scale * dvar * (var - hp.var_floor);
        }
        affine_backward(P + L.wc, fc.u.data(), dhead.data(), G + L.wc, G + L.bc, du.data(), 3 * K,
                        U);
    } else {
        const auto& cats = enc.cat_emb[static_cast<size_t>(target)];
        const int y = category_index(spec, category_of(truth));
        const double tau = std::exp(P[L.temp]);
        std::vector<double> de(H, 0.0);
        double dtau_total = 0.0;
        for (size_t i = 0; i < cats.size(); ++i) {
            const double dlogit =
                scale * (fc.pmf[i] - (static_cast<int>(i) == y ? 1.0 : 0.0));
            dtau_total += dlogit * fc.cosines[i];
            const double dcos = dlogit * tau;
            double cn2 = 0.0;
            for (size_t j = 0; j < H; ++j) cn2 += cats[i][j] * cats[i][j];
            const double cn = std::sqrt(cn2);
            const double denom = fc.e_norm * cn + 1e-12;
            for (size_t j = 0; j < H; ++j) de[j] += dcos * cats[i][j] / denom;
            if (fc.e_norm > 1e-12) {
                const double coeff = -dcos * fc.cosines[i] * cn / (denom * fc.e_norm);
                for (size_t j = 0; j < H; ++j) de[j] += coeff * fc.e[j];
            }
        }
        G[L.temp] += dtau_total * tau;
        affine_backward(P + L.wd, fc.u.data(), de.data(), G + L.wd, G + L.bd, du.data(), H, U);
    }

    // query head
    std::vector<double> dupre(U);
    for (size_t i = 0; i < U; ++i) dupre[i] = du[i] * (1.0 - fc.u[i] * fc.u[i]);
    std::vector<double> dcat(U + H, 0.0);
    affine_backward(P + L.wq, fc.cat_in.data(), dupre.data(), G + L.wq, G + L.bq, dcat.data(), U,
                    U + H);

    // set network
    std::vector<double> dz(dcat.begin(), dcat.begin() + static_cast<std::ptrdiff_t>(U));
    std::vector<double> dg(U, 0.0);
    affine_backward(P + L.w3, fc.g.data(), dz.data(), G + L.w3, G + L.b3, dg.data(), U, U);
    std::vector<double> dgpre(U);
    for (size_t i = 0; i < U; ++i) dgpre[i] = dg[i] * (1.0 - fc.g[i] * fc.g[i]);
    std::vector<double> dm(U, 0.0);
    affine_backward(P + L.w2, fc.m.data(), dgpre.data(), G + L.w2, G + L.b2, dm.data(), U, U);

    // pooling + token projection
    if (fc.empty_set) {
        for (size_t i = 0; i < U; ++i) G[L.e0 + i] += dm[i];
    } else {
        const double inv = 1.0 / static_cast<double>(fc.a.size());
        std::vector<double> dapre(U);
        for (size_t t = 0; t < fc.a.size(); ++t) {
            for (size_t i = 0; i < U; ++i) {
                dapre[i] = dm[i] * inv * (1.0 - fc.a[t][i] * fc.a[t][i]);
            }
            affine_backward(P + L.w1, fc.x[t].data(), dapre.data(), G + L.w1, G + L.b1, nullptr, U,
                            T);
        }
    }
    return nll;
}

double joint_loglik(const ConditionalModel& model, const EncodedContext& enc, const Row& row,
                    std::span<const int> permutation) {
    const size_t d = enc.ctx->features.size();
    if (permutation.size() != d) {
        throw ValidationError("joint_loglik: permutation must cover all features");
    }
    std::vector<bool> seen(d, false);
    for (int p : permutation) {
        if (p < 0 || p >= static_cast<int>(d) || seen[static_cast<size_t>(p)]) {
            throw ValidationError("joint_loglik: not a permutation");
        }
        seen[static_cast<size_t>(p)] = true;
    }
    double ll = 0.0;
    std::vector<ObservedValue> prefix;
    for (int target : permutation) {
        auto dist = predict(model, enc, prefix, target);
        const auto& spec = enc.ctx->features[static_cast<size_t>(target)];
        if (std::holds_alternative<ContinuousKind>(spec.kind)) {
            ll += std::get<MixtureOfGaussians>(dist).log_pdf(
                number_of(row[static_cast<size_t>(target)]));
        } else {
            int y = category_index(spec, category_of(row[static_cast<size_t>(target)]));
            ll += std::log(
                std::max(std::get<CategoricalPmf>(dist).probs[static_cast<size_t>(y)], 1e-300));
        }
        prefix.push_back({target, row[static_cast<size_t>(target)]});
    }
    return ll;
}

double joint_loglik_normalized(const ConditionalModel& model, const EncodedContext& enc,
                               const Row& row, std::span<const int> permutation) {
    return joint_loglik(model, enc, row, permutation) /
           static_cast<double>(enc.ctx->features.size());
}

Value sample_from(const PredictiveDistribution& dist, const FeatureSpec& spec, Rng& rng) {
    if (const auto* mog = std::get_if<MixtureOfGaussians>(&dist)) {
        const auto& ck = std::get<ContinuousKind>(spec.kind);
        size_t k = rng.categorical(mog->weights);
        double v = mog->means[k] + std::sqrt(mog->vars[k]) * rng.normal();
        return NumberValue{std::clamp(v, ck.lo, ck.hi)};
    }
    const auto& pmf = std::get<CategoricalPmf>(dist);
    const auto& cats = std::get<DiscreteKind>(spec.kind).categories;
    return CategoryValue{cats[rng.categorical(pmf.probs)]};
}

Row sample_joint(const ConditionalModel& model, const EncodedContext& enc,
                 std::span<const int> permutation, std::uint64_t seed) {
    const size_t d = enc.ctx->features.size();
    Rng rng(mix_seed(seed, "sample_joint"));
    Row row(d);
    std::vector<ObservedValue> prefix;
    for (int target : permutation) {
        auto dist = predict(model, enc, prefix, target);
        Value v = sample_from(dist, enc.ctx->features[static_cast<size_t>(target)], rng);
        row[static_cast<size_t>(target)] = v;
        prefix.push_back({target, std::move(v)});
    }
    return row;
}

MaskSampler::Mask MaskSampler::sample_with(Rng& rng, int n_features) {
    Mask mask;
    mask.target = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_features)));
    int cardinality = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_features)));
    std::vector<int> rest;
    rest.reserve(static_cast<size_t>(n_features - 1));
    for (int i = 0; i < n_features; ++i) {
        if (i != mask.target) rest.push_back(i);
    }
    for (int i = 0; i < cardinality; ++i) {
        size_t j = static_cast<size_t>(i) +
                   static_cast<size_t>(rng.uniform_int(rest.size() - static_cast<size_t>(i)));
        std::swap(rest[static_cast<size_t>(i)], rest[j]);
    }
    rest.resize(static_cast<size_t>(cardinality));
    std::sort(rest.begin(), rest.end());
    mask.observed = std::move(rest);
    return mask;
}

// ---- Checkpoints -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'T', 'E', 'X', 'R', 'M', 'D', 'L', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<size_t>(i)]))
             << (8 * i);
    }
    return v;
}

} // namespace

std::string serialize_model(const ConditionalModel& model) {
    json header;
    header["text_dim"] = model.hp().text_dim;
    header["fourier"] = model.hp().fourier;
    header["mixture"] = model.hp().mixture;
    header["width"] = model.hp().width;
    header["var_floor"] = model.hp().var_floor;
    header["temp_init"] = model.hp().temp_init;
    header["training_seed"] = model.training_seed();
    header["manifest_hash"] = model.manifest_hash();
    header["param_count"] = model.param_count();
    const std::string htext = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<std::uint32_t>(htext.size()));
    out += htext;
    for (double p : model.params()) {
        std::uint64_t bits;
        std::memcpy(&bits, &p, sizeof(bits));
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    return out;
}

ConditionalModel deserialize_model(const std::string& bytes) {
    if (bytes.size() < sizeof(kMagic) + 4 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IntegrityError("not a model checkpoint");
    }
    size_t at = sizeof(kMagic);
    const std::uint32_t hlen = get_u32(bytes, at);
    at += 4;
    if (bytes.size() < at + hlen) throw IntegrityError("truncated checkpoint header");
    json header = json::parse(bytes.substr(at, hlen));
    at += hlen;

    Hyperparams hp;
    hp.text_dim = header.at("text_dim").get<int>();
    hp.fourier = header.at("fourier").get<int>();
    hp.mixture = header.at("mixture").get<int>();
    hp.width = header.at("width").get<int>();
    hp.var_floor = header.at("var_floor").get<double>();
    hp.temp_init = header.at("temp_init").get<double>();

    ConditionalModel model(hp, 0);
    const size_t count = header.at("param_count").get<size_t>();
    if (count != model.param_count() || bytes.size() != at + count * 8) {
        throw IntegrityError("checkpoint parameter block size mismatch");
    }
    auto params = model.params();
    for (size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(
                        static_cast<unsigned char>(bytes[at + i * 8 + static_cast<size_t>(b)]))
                    << (8 * b);
        }
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        params[i] = v;
    }
    model.set_training_seed(header.at("training_seed").get<std::uint64_t>());
    model.set_manifest_hash(header.at("manifest_hash").get<std::string>());
    return model;
}

void save_model(const ConditionalModel& model, const std::string& path) {
    write_file(path, serialize_model(model));
}

ConditionalModel load_model(const std::string& path) {
    return deserialize_model(read_file(path));
}

} // namespace texr
