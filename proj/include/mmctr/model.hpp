#pragma once

/** \file model.hpp
 *  \brief Multi-manifold click model.
 *
 * Every user and ad owns one row per manifold. For a (user, ad) pair:
 *
 *     s_m   = -scale_m * d_m(u_m, a_m) + bias_m        per-manifold score
 *     alpha = softmax(attention * s)                   attention over manifolds
 *     logit = sum_m alpha_m s_m + global_bias
 *     p     = sigmoid(logit)
 *
 * trained with binary cross-entropy. Rows are stored in single precision;
 * every computation runs in double.
 */

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "mmctr/data.hpp"
#include "mmctr/geometry.hpp"
#include "mmctr/optim.hpp"

namespace mmctr {

enum class EntityKind { User, Ad };

/// Lower bound applied to manifold_scale after every update.
inline constexpr double kMinManifoldScale = 1e-3;

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the loss.
inline constexpr double kProbClamp = 1e-7;

class EmbeddingTable {
public:
    /// All-zero table (the origin is valid on both manifold kinds).
    EmbeddingTable(ManifoldSpec spec, EntityKind kind, std::size_t num_rows);

    /// Takes row-major storage. Throws DomainError if any row is not a valid point.
    EmbeddingTable(ManifoldSpec spec, EntityKind kind, std::size_t num_rows,
                   std::vector<float> data);

    const ManifoldSpec& spec() const noexcept { return spec_; }
    EntityKind kind() const noexcept { return kind_; }
    std::size_t num_rows() const noexcept { return num_rows_; }
    std::size_t dim() const noexcept { return spec_.dim(); }
    const std::vector<float>& data() const noexcept { return data_; }

    std::span<const float> row(std::size_t i) const {
        return {data_.data() + i * dim(), dim()};
    }
    void read_row(std::size_t i, std::span<double> out) const;
    std::vector<double> row_as_double(std::size_t i) const;

    /// Rounds to storage precision. On the ball the stored row is pulled back
    /// so that c|row|^2 <= (1 - eps)^2 holds for the rounded values.
    void store_row(std::size_t i, std::span<const double> values, double eps = kDefaultBallEps);

private:
    ManifoldSpec spec_;
    EntityKind kind_;
    std::size_t num_rows_;
    std::vector<float> data_;
};

/// Fusion parameters for M manifolds. `attention` is row-major M x M.
struct FusionParams {
    std::vector<double> manifold_bias;
    std::vector<double> manifold_scale;
    std::vector<double> attention;
    double global_bias{0.0};

    /// Zero biases, unit scales, zero attention (uniform weights).
    static FusionParams neutral(std::size_t num_manifolds);
    /// Same shape, all zeros; used as a gradient accumulator.
    static FusionParams zeros(std::size_t num_manifolds);

    std::size_t size() const noexcept { return manifold_bias.size(); }
    double attention_at(std::size_t row, std::size_t col) const {
        return attention[row * size() + col];
    }
    void validate() const;

    friend bool operator==(const FusionParams&, const FusionParams&) = default;
};

struct ModelConfig {
    std::vector<ManifoldSpec> manifolds;
    std::size_t negatives_per_positive{1};
    double init_scale{0.01};
    UpdateMode update_mode{UpdateMode::Riemannian};
    std::uint64_t seed{42};

    /// Throws ConfigError; init_scale must not exceed 0.1 / sqrt(max(c, 1)).
    void validate() const;
};

/// The manifolds of a model with the offsets of each one inside a
/// concatenated coordinate vector (all manifolds of one entity back to back).
class ManifoldSet {
public:
    explicit ManifoldSet(std::vector<ManifoldSpec> specs);

    std::size_t size() const noexcept { return specs_.size(); }
    std::size_t total_dim() const noexcept { return total_dim_; }
    const ManifoldSpec& operator[](std::size_t m) const { return specs_[m]; }
    const std::vector<ManifoldSpec>& specs() const noexcept { return specs_; }
    std::size_t offset(std::size_t m) const { return offsets_[m]; }

    std::span<const double> slice(std::span<const double> flat, std::size_t m) const {
        return flat.subspan(offsets_[m], specs_[m].dim());
    }
    std::span<double> slice(std::span<double> flat, std::size_t m) const {
        return flat.subspan(offsets_[m], specs_[m].dim());
    }

private:
    std::vector<ManifoldSpec> specs_;
    std::vector<std::size_t> offsets_;
    std::size_t total_dim_{0};
};

struct ModelParams {
    std::vector<EmbeddingTable> users;  ///< one table per manifold
    std::vector<EmbeddingTable> ads;
    FusionParams fusion;

    std::size_t num_manifolds() const noexcept { return users.size(); }
    std::size_t num_users() const { return users.front().num_rows(); }
    std::size_t num_ads() const { return ads.front().num_rows(); }
    ManifoldSet manifolds() const;

    /// Concatenated double-precision rows of one entity across all manifolds.
    void gather_user(std::size_t user, std::span<double> out) const;
    void gather_ad(std::size_t ad, std::span<double> out) const;

    /// Checks table shapes, manifold agreement and fusion shape.
    void validate() const;
};

/// Draws rows uniformly from the ball of radius init_scale (hyperbolic) or
/// from N(0, init_scale^2) per coordinate (Euclidean); fusion starts neutral.
ModelParams init_embeddings(const ModelConfig& cfg, std::size_t num_users, std::size_t num_ads);

struct FusionOutput {
    std::vector<double> alpha;
    double logit{0.0};
};

double sigmoid(double z);

/// s_m = -scale_m * d_m + bias_m over concatenated rows.
std::vector<double> score_per_manifold(const ManifoldSet& set, std::span<const double> user,
                                       std::span<const double> ad, const FusionParams& fp);

/// Checked variant over typed points; specs must agree index by index.
std::vector<double> score_per_manifold(std::span<const ManifoldPoint> user_rows,
                                       std::span<const ManifoldPoint> ad_rows,
                                       const FusionParams& fp);

FusionOutput fuse(std::span<const double> scores, const FusionParams& fp);

/// Click logit of concatenated rows.
double pair_logit(const ManifoldSet& set, std::span<const double> user, std::span<const double> ad,
                  const FusionParams& fp);

/// Click probability; throws UnknownEntity for out-of-range indices.
double predict_ctr(const ModelParams& params, std::size_t user, std::size_t ad);

/// Mean clamped binary cross-entropy.
double bce_loss(std::span<const double> probs, std::span<const std::uint8_t> labels);

/// Gradient of one example's loss. `user` / `ad` are concatenated like the rows.
struct PairGradient {
    std::vector<double> user;
    std::vector<double> ad;
    FusionParams fusion;
};

/// Loss of one example; fills `grad` when non-null. The logit gradient is
/// p - y, the derivative of the unclamped loss.
double pair_loss(const ManifoldSet& set, std::span<const double> user, std::span<const double> ad,
                 const FusionParams& fp, int label, PairGradient* grad = nullptr);

/// Gradient rows for the entries of one table that a batch touched.
class SparseRowGrads {
public:
    explicit SparseRowGrads(std::size_t dim) : dim_(dim) {}

    /// Accumulator for `row`, zero-initialized on first use.
    std::span<double> at(std::size_t row);

    bool contains(std::size_t row) const { return slot_.count(row) != 0; }
    std::span<const double> grad(std::size_t row) const;

    /// Rows in first-touch order.
    const std::vector<std::size_t>& rows() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_;
    std::vector<std::size_t> rows_;
    std::vector<double> values_;
    std::unordered_map<std::size_t, std::size_t> slot_;
};

struct Gradients {
    std::vector<SparseRowGrads> users;  ///< per manifold
    std::vector<SparseRowGrads> ads;
    FusionParams fusion;
    double loss{0.0};  ///< mean loss of the batch
};

/// Mean loss of a batch and its gradient with respect to every touched row
/// and every fusion parameter.
Gradients backward(std::span<const Example> batch, const ModelParams& params);

double batch_loss(std::span<const Example> batch, const ModelParams& params);

/// Applies one update: rows move by `mode`, fusion parameters by plain SGD
/// (scales clamped to kMinManifoldScale).
void apply_gradients(ModelParams& params, const Gradients& grads, const OptimizerConfig& cfg,
                     UpdateMode mode);

}  // namespace mmctr
