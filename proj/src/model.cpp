#include "mmctr/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "mmctr/errors.hpp"
#include "mmctr/rng.hpp"

namespace mmctr {

namespace {

double sq_norm_f(std::span<const float> x) {
    double s = 0.0;
    for (float v : x) s += static_cast<double>(v) * static_cast<double>(v);
    return s;
}

// Rounds to float; then walks every coordinate toward zero until
// c * |out|^2 <= bound holds for the rounded values.
void round_within(std::span<const double> values, std::span<float> out, double c, double bound) {
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
    if (c == 0.0) return;
    while (c * sq_norm_f(out) > bound) {
        for (float& v : out) v = std::nextafter(v, 0.0f);
    }
}

}  // namespace

EmbeddingTable::EmbeddingTable(ManifoldSpec spec, EntityKind kind, std::size_t num_rows)
    : spec_(spec), kind_(kind), num_rows_(num_rows), data_(num_rows * spec.dim(), 0.0f) {
    if (num_rows == 0) throw ConfigError("embedding table needs at least one row");
}

EmbeddingTable::EmbeddingTable(ManifoldSpec spec, EntityKind kind, std::size_t num_rows,
                               std::vector<float> data)
    : spec_(spec), kind_(kind), num_rows_(num_rows), data_(std::move(data)) {
    if (num_rows == 0) throw ConfigError("embedding table needs at least one row");
    if (data_.size() != num_rows * spec_.dim()) {
        throw ConfigError("embedding table storage has " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(num_rows * spec_.dim()));
    }
    std::vector<double> buf(dim());
    for (std::size_t i = 0; i < num_rows_; ++i) {
        read_row(i, buf);
        if (!kernels::is_valid_point(spec_, buf)) {
            throw DomainError("row " + std::to_string(i) + " is not a valid point of " +
                              describe(spec_));
        }
    }
}

void EmbeddingTable::read_row(std::size_t i, std::span<double> out) const {
    const auto r = row(i);
    for (std::size_t k = 0; k < r.size(); ++k) out[k] = static_cast<double>(r[k]);
}

std::vector<double> EmbeddingTable::row_as_double(std::size_t i) const {
    std::vector<double> out(dim());
    read_row(i, out);
    return out;
}

void EmbeddingTable::store_row(std::size_t i, std::span<const double> values, double eps) {
    if (values.size() != dim()) throw ConfigError("store_row: dimension mismatch");
    if (!kernels::all_finite(values)) {
        throw DomainError("refusing to store a non-finite row " + std::to_string(i));
    }
    std::span<float> dst(data_.data() + i * dim(), dim());
    if (!spec_.hyperbolic()) {
        round_within(values, dst, 0.0, 0.0);
        for (float v : dst) {
            if (!std::isfinite(v)) throw DomainError("row overflows single precision");
        }
        return;
    }
    round_within(values, dst, spec_.curvature(), (1.0 - eps) * (1.0 - eps));
}

FusionParams FusionParams::neutral(std::size_t num_manifolds) {
    FusionParams fp = zeros(num_manifolds);
    std::fill(fp.manifold_scale.begin(), fp.manifold_scale.end(), 1.0);
    return fp;
}

FusionParams FusionParams::zeros(std::size_t num_manifolds) {
    FusionParams fp;
    fp.manifold_bias.assign(num_manifolds, 0.0);
    fp.manifold_scale.assign(num_manifolds, 0.0);
    fp.attention.assign(num_manifolds * num_manifolds, 0.0);
    fp.global_bias = 0.0;
    return fp;
}

void FusionParams::validate() const {
    const std::size_t m = manifold_bias.size();
    if (m == 0) throw ConfigError("fusion: at least one manifold required");
    if (manifold_scale.size() != m) throw ConfigError("fusion: manifold_scale has wrong length");
    if (attention.size() != m * m) throw ConfigError("fusion: attention must be M x M");
    for (double s : manifold_scale) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("fusion: manifold_scale must be > 0");
    }
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!finite(manifold_bias) || !finite(attention) || !std::isfinite(global_bias)) {
        throw ConfigError("fusion: parameters must be finite");
    }
}

void ModelConfig::validate() const {
    if (manifolds.empty()) throw ConfigError("manifolds: at least one manifold required");
    if (negatives_per_positive < 1) throw ConfigError("negatives_per_positive: must be >= 1");
    if (!(init_scale > 0.0) || !std::isfinite(init_scale)) {
        throw ConfigError("init_scale: must be > 0");
    }
    double max_c = 1.0;
    for (const auto& s : manifolds) max_c = std::max(max_c, s.curvature());
    const double limit = 0.1 / std::sqrt(max_c);
    if (init_scale > limit) {
        throw ConfigError("init_scale: must be <= 0.1/sqrt(max(c,1)) = " + std::to_string(limit));
    }
}

ManifoldSet::ManifoldSet(std::vector<ManifoldSpec> specs) : specs_(std::move(specs)) {
    offsets_.reserve(specs_.size());
    for (const auto& s : specs_) {
        offsets_.push_back(total_dim_);
        total_dim_ += s.dim();
    }
}

ManifoldSet ModelParams::manifolds() const {
    std::vector<ManifoldSpec> specs;
    specs.reserve(users.size());
    for (const auto& t : users) specs.push_back(t.spec());
    return ManifoldSet(std::move(specs));
}

void ModelParams::gather_user(std::size_t user, std::span<double> out) const {
    std::size_t off = 0;
    for (const auto& t : users) {
        t.read_row(user, out.subspan(off, t.dim()));
        off += t.dim();
    }
}

void ModelParams::gather_ad(std::size_t ad, std::span<double> out) const {
    std::size_t off = 0;
    for (const auto& t : ads) {
        t.read_row(ad, out.subspan(off, t.dim()));
        off += t.dim();
    }
}

void ModelParams::validate() const {
    const std::size_t m = users.size();
    if (m == 0 || ads.size() != m) throw ConfigError("model needs matching user/ad tables per manifold");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(users[i].spec() == ads[i].spec())) {
            throw SpecMismatch("user and ad tables disagree on manifold " + std::to_string(i));
        }
        if (users[i].num_rows() != users[0].num_rows() || ads[i].num_rows() != ads[0].num_rows()) {
            throw ConfigError("tables of one entity kind must have the same number of rows");
        }
    }
    if (fusion.size() != m) throw ConfigError("fusion parameters do not match the manifold count");
    fusion.validate();
}

ModelParams init_embeddings(const ModelConfig& cfg, std::size_t num_users, std::size_t num_ads) {
    cfg.validate();
    if (num_users < 1 || num_ads < 1) throw ConfigError("need at least one user and one ad");
    Rng rng(derive_seed(cfg.seed, "init"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double sigma = cfg.init_scale;

    auto fill = [&](const ManifoldSpec& spec, EntityKind kind, std::size_t rows) {
        EmbeddingTable table(spec, kind, rows);
        std::vector<double> row(spec.dim());
        std::vector<float> rounded(spec.dim());
        for (std::size_t r = 0; r < rows; ++r) {
            if (spec.hyperbolic()) {
                double n = 0.0;
                while (n < kZeroNorm) {
                    for (double& v : row) v = normal(rng);
                    n = std::sqrt(kernels::sq_norm(row));
                }
                const double radius =
                    sigma * std::pow(uniform(rng), 1.0 / static_cast<double>(spec.dim()));
                for (double& v : row) v *= radius / n;
                // Keep |row| <= sigma after rounding to float.
                round_within(row, rounded, 1.0, sigma * sigma);
                for (std::size_t k = 0; k < row.size(); ++k) row[k] = rounded[k];
            } else {
                for (double& v : row) v = sigma * normal(rng);
            }
            table.store_row(r, row);
        }
        return table;
    };

    ModelParams params;
    for (const auto& spec : cfg.manifolds) {
        params.users.push_back(fill(spec, EntityKind::User, num_users));
        params.ads.push_back(fill(spec, EntityKind::Ad, num_ads));
    }
    params.fusion = FusionParams::neutral(cfg.manifolds.size());
    return params;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> score_per_manifold(const ManifoldSet& set, std::span<const double> user,
                                       std::span<const double> ad, const FusionParams& fp) {
    std::vector<double> s(set.size());
    for (std::size_t m = 0; m < set.size(); ++m) {
        const double d = kernels::distance(set[m], set.slice(user, m), set.slice(ad, m));
        s[m] = -fp.manifold_scale[m] * d + fp.manifold_bias[m];
    }
    return s;
}

std::vector<double> score_per_manifold(std::span<const ManifoldPoint> user_rows,
                                       std::span<const ManifoldPoint> ad_rows,
                                       const FusionParams& fp) {
    if (user_rows.size() != ad_rows.size() || user_rows.size() != fp.size()) {
        throw LengthMismatch("score_per_manifold: user rows, ad rows and fusion params must have length M");
    }
    std::vector<double> s(user_rows.size());
    for (std::size_t m = 0; m < s.size(); ++m) {
        s[m] = -fp.manifold_scale[m] * distance(user_rows[m], ad_rows[m]) + fp.manifold_bias[m];
    }
    return s;
}

FusionOutput fuse(std::span<const double> scores, const FusionParams& fp) {
    const std::size_t m = scores.size();
    if (m != fp.size()) throw LengthMismatch("fuse: score vector length does not match fusion params");
    if (!kernels::all_finite(scores)) throw DomainError("fuse: non-finite score");
    FusionOutput out;
    out.alpha.resize(m);
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
        double z = 0.0;
        for (std::size_t k = 0; k < m; ++k) z += fp.attention_at(j, k) * scores[k];
        out.alpha[j] = z;
        zmax = std::max(zmax, z);
    }
    double total = 0.0;
    for (double& a : out.alpha) {
        a = std::exp(a - zmax);
        total += a;
    }
    double logit = fp.global_bias;
    for (std::size_t j = 0; j < m; ++j) {
        out.alpha[j] /= total;
        logit += out.alpha[j] * scores[j];
    }
    out.logit = logit;
    return out;
}

double pair_logit(const ManifoldSet& set, std::span<const double> user, std::span<const double> ad,
                  const FusionParams& fp) {
    return fuse(score_per_manifold(set, user, ad, fp), fp).logit;
}

double predict_ctr(const ModelParams& params, std::size_t user, std::size_t ad) {
    if (user >= params.num_users()) throw UnknownEntity("user index " + std::to_string(user) + " out of range");
    if (ad >= params.num_ads()) throw UnknownEntity("ad index " + std::to_string(ad) + " out of range");
    const ManifoldSet set = params.manifolds();
    std::vector<double> u(set.total_dim());
    std::vector<double> a(set.total_dim());
    params.gather_user(user, u);
    params.gather_ad(ad, a);
    return sigmoid(pair_logit(set, u, a, params.fusion));
}

namespace {

double clamped_bce(double p, int label) {
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return label == 1 ? -std::log(pc) : -std::log1p(-pc);
}

}  // namespace

double bce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
    if (probs.size() != labels.size()) {
        throw LengthMismatch("bce_loss: " + std::to_string(probs.size()) + " probabilities vs " +
                             std::to_string(labels.size()) + " labels");
    }
    if (probs.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) total += clamped_bce(probs[i], labels[i]);
    return total / static_cast<double>(probs.size());
}

double pair_loss(const ManifoldSet& set, std::span<const double> user, std::span<const double> ad,
                 const FusionParams& fp, int label, PairGradient* grad) {
    const std::size_t m_count = set.size();
    std::vector<double> dist(m_count);
    std::vector<double> s(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
        dist[m] = kernels::distance(set[m], set.slice(user, m), set.slice(ad, m));
        s[m] = -fp.manifold_scale[m] * dist[m] + fp.manifold_bias[m];
    }
    const FusionOutput f = fuse(s, fp);
    const double p = sigmoid(f.logit);
    const double loss = clamped_bce(p, label);
    if (grad == nullptr) return loss;

    grad->user.assign(set.total_dim(), 0.0);
    grad->ad.assign(set.total_dim(), 0.0);
    grad->fusion = FusionParams::zeros(m_count);

    const double g_logit = p - static_cast<double>(label);
    double s_bar = 0.0;
    for (std::size_t m = 0; m < m_count; ++m) s_bar += f.alpha[m] * s[m];

    // Through the softmax: d logit / d z_j = alpha_j (s_j - s_bar).
    std::vector<double> g_z(m_count);
    for (std::size_t j = 0; j < m_count; ++j) g_z[j] = g_logit * f.alpha[j] * (s[j] - s_bar);

    grad->fusion.global_bias = g_logit;
    for (std::size_t j = 0; j < m_count; ++j) {
        for (std::size_t k = 0; k < m_count; ++k) {
            grad->fusion.attention[j * m_count + k] = g_z[j] * s[k];
        }
    }
    for (std::size_t m = 0; m < m_count; ++m) {
        double g_s = g_logit * f.alpha[m];
        for (std::size_t j = 0; j < m_count; ++j) g_s += g_z[j] * fp.attention_at(j, m);
        grad->fusion.manifold_bias[m] = g_s;
        grad->fusion.manifold_scale[m] = -dist[m] * g_s;

        auto gu = set.slice(std::span<double>(grad->user), m);
        auto ga = set.slice(std::span<double>(grad->ad), m);
        kernels::distance_grad(set[m], set.slice(user, m), set.slice(ad, m), gu, ga);
        const double w = -fp.manifold_scale[m] * g_s;
        for (double& v : gu) v *= w;
        for (double& v : ga) v *= w;
    }
    return loss;
}

std::span<double> SparseRowGrads::at(std::size_t row) {
    auto [it, inserted] = slot_.try_emplace(row, rows_.size());
    if (inserted) {
        rows_.push_back(row);
        values_.resize(values_.size() + dim_, 0.0);
    }
    return {values_.data() + it->second * dim_, dim_};
}

std::span<const double> SparseRowGrads::grad(std::size_t row) const {
    const auto it = slot_.find(row);
    if (it == slot_.end()) return {};
    return {values_.data() + it->second * dim_, dim_};
}

Gradients backward(std::span<const Example> batch, const ModelParams& params) {
    const ManifoldSet set = params.manifolds();
    const std::size_t m_count = set.size();
    Gradients out;
    for (std::size_t m = 0; m < m_count; ++m) {
        out.users.emplace_back(set[m].dim());
        out.ads.emplace_back(set[m].dim());
    }
    out.fusion = FusionParams::zeros(m_count);
    if (batch.empty()) return out;

    const double w = 1.0 / static_cast<double>(batch.size());
    std::vector<double> u(set.total_dim());
    std::vector<double> a(set.total_dim());
    PairGradient pg;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Example& e = batch[i];
        if (e.user >= params.num_users() || e.ad >= params.num_ads()) {
            throw UnknownEntity("batch entry " + std::to_string(i) + " references an unknown entity", i);
        }
        params.gather_user(e.user, u);
        params.gather_ad(e.ad, a);
        out.loss += w * pair_loss(set, u, a, params.fusion, e.label, &pg);

        for (std::size_t m = 0; m < m_count; ++m) {
            auto gu = out.users[m].at(e.user);
            auto ga = out.ads[m].at(e.ad);
            const auto su = set.slice(std::span<const double>(pg.user), m);
            const auto sa = set.slice(std::span<const double>(pg.ad), m);
            for (std::size_t k = 0; k < gu.size(); ++k) {
                gu[k] += w * su[k];
                ga[k] += w * sa[k];
            }
        }
        auto& f = out.fusion;
        for (std::size_t m = 0; m < m_count; ++m) {
            f.manifold_bias[m] += w * pg.fusion.manifold_bias[m];
            f.manifold_scale[m] += w * pg.fusion.manifold_scale[m];
        }
        for (std::size_t k = 0; k < f.attention.size(); ++k) f.attention[k] += w * pg.fusion.attention[k];
        f.global_bias += w * pg.fusion.global_bias;
    }
    return out;
}

double batch_loss(std::span<const Example> batch, const ModelParams& params) {
    if (batch.empty()) return 0.0;
    const ManifoldSet set = params.manifolds();
    std::vector<double> u(set.total_dim());
    std::vector<double> a(set.total_dim());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Example& e = batch[i];
        if (e.user >= params.num_users() || e.ad >= params.num_ads()) {
            throw UnknownEntity("batch entry " + std::to_string(i) + " references an unknown entity", i);
        }
        params.gather_user(e.user, u);
        params.gather_ad(e.ad, a);
        total += pair_loss(set, u, a, params.fusion, e.label);
    }
    return total / static_cast<double>(batch.size());
}

void apply_gradients(ModelParams& params, const Gradients& grads, const OptimizerConfig& cfg,
                     UpdateMode mode) {
    auto update_table = [&](EmbeddingTable& table, const SparseRowGrads& g) {
        std::vector<double> row(table.dim());
        for (std::size_t r : g.rows()) {
            table.read_row(r, row);
            if (mode == UpdateMode::Riemannian) {
                kernels::rsgd_step(table.spec(), row, g.grad(r), cfg);
            } else {
                kernels::tangent_origin_step(table.spec(), row, g.grad(r), cfg);
            }
            table.store_row(r, row, cfg.ball_eps);
        }
    };
    for (std::size_t m = 0; m < params.num_manifolds(); ++m) {
        update_table(params.users[m], grads.users[m]);
        update_table(params.ads[m], grads.ads[m]);
    }
    auto& f = params.fusion;
    const double lr = cfg.learning_rate;
    for (std::size_t m = 0; m < f.size(); ++m) {
        f.manifold_bias[m] -= lr * grads.fusion.manifold_bias[m];
        f.manifold_scale[m] =
            std::max(kMinManifoldScale, f.manifold_scale[m] - lr * grads.fusion.manifold_scale[m]);
    }
    const double decay = cfg.attention_weight_decay;
    for (std::size_t k = 0; k < f.attention.size(); ++k) {
        f.attention[k] -= lr * (grads.fusion.attention[k] + decay * f.attention[k]);
    }
    f.global_bias -= lr * grads.fusion.global_bias;
}

}  // namespace mmctr
