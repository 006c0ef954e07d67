#pragma once

/** \file optim.hpp
 *  \brief Riemannian SGD on Euclidean / Poincare-ball parameters and a
 *  finite-difference gradient checker.
 */

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmctr/geometry.hpp"

namespace mmctr {

/// How embedding rows are moved by an update.
enum class UpdateMode {
    Riemannian,     ///< x <- exp_x(-lr * riemannian_grad)
    TangentOrigin,  ///< rows parameterized as exp_0(v); plain SGD on v
};

std::string to_string(UpdateMode mode);
UpdateMode update_mode_from_string(const std::string& name);

/// Step-size schedule over the whole run.
enum class LrSchedule {
    Constant,
    Linear,  ///< learning_rate * (1 - step / total_steps)
};

std::string to_string(LrSchedule schedule);
LrSchedule lr_schedule_from_string(const std::string& name);

struct OptimizerConfig {
    double learning_rate{0.1};
    LrSchedule lr_schedule{LrSchedule::Constant};
    double ball_eps{kDefaultBallEps};
    std::optional<double> grad_clip;  ///< max Riemannian gradient norm; off when empty
    /// Decoupled L2 shrinkage of the attention matrix: W -= lr * (grad + decay * W).
    double attention_weight_decay{0.0};

    /// Throws ConfigError naming the violated constraint.
    void validate() const;
};

/// Learning rate for the zero-based `step` of `total_steps`.
double scheduled_learning_rate(const OptimizerConfig& cfg, std::size_t step, std::size_t total_steps);

namespace kernels {

/// Inverse-metric rescaling: ((1 - c|x|^2)^2 / 4) * g on the ball, g itself on R^n.
void riemannian_grad(const ManifoldSpec& spec, std::span<const double> x,
                     std::span<const double> ambient_grad, std::span<double> out);

/// In-place RSGD update of a single row.
void rsgd_step(const ManifoldSpec& spec, std::span<double> x, std::span<const double> ambient_grad,
               const OptimizerConfig& cfg);

/// In-place update of a row parameterized through the exponential map at the origin.
void tangent_origin_step(const ManifoldSpec& spec, std::span<double> x,
                         std::span<const double> ambient_grad, const OptimizerConfig& cfg);

}  // namespace kernels

TangentVector riemannian_grad(const ManifoldPoint& x, std::span<const double> ambient_grad);

ManifoldPoint rsgd_step(const ManifoldPoint& x, std::span<const double> ambient_grad,
                        const OptimizerConfig& cfg);

ManifoldPoint tangent_origin_step(const ManifoldPoint& x, std::span<const double> ambient_grad,
                                  const OptimizerConfig& cfg);

/// Result of comparing an analytic gradient against central differences.
struct GradientCheckReport {
    /// Per-coordinate relative error; 0 where the absolute error is under the floor.
    std::vector<double> per_coordinate;
    std::vector<double> numeric;
    double max_rel_err{0.0};
    double max_abs_err{0.0};
    /// Largest relative error ignoring the floor, over coordinates with a nonzero scale.
    double max_unfloored_rel_err{0.0};
    double step{0.0};  ///< h actually used

    bool passed(double rel_tol) const { return max_rel_err <= rel_tol; }
};

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences over unconstrained coordinates.
GradientCheckReport finite_difference_check(const ScalarFn& fn, std::span<const double> analytic,
                                            std::span<const double> at, double h = 1e-5,
                                            double abs_floor = 1e-8);

/// Central differences in ambient coordinates around a manifold point. If a
/// perturbed point leaves the ball, h is shrunk tenfold once before giving up
/// with DomainError.
GradientCheckReport gradient_check(const ScalarFn& fn, std::span<const double> analytic,
                                   const ManifoldPoint& x, double h = 1e-5,
                                   double abs_floor = 1e-8);

}  // namespace mmctr
