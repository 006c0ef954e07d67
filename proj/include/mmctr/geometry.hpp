#pragma once

/** \file geometry.hpp
 *  \brief Euclidean and Poincare-ball kernels with an explicit curvature parameter.
 *
 * Two layers live here:
 * - `kernels::` works on raw coordinate spans and is what the model and the
 *   optimizer call in their inner loops. No allocation, no invariant checks
 *   beyond what the formulas themselves need.
 * - `ManifoldPoint` / `TangentVector` and the free functions below validate
 *   their inputs and are the public, checked surface.
 *
 * The ball of curvature -c is the open ball of radius 1/sqrt(c). All
 * arithmetic is done in double precision.
 */

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mmctr {

enum class ManifoldKind { Euclidean, PoincareBall };

/// Default margin used to keep points strictly inside the ball.
inline constexpr double kDefaultBallEps = 1e-5;

/// Norms below this are treated as zero (removable singularities).
inline constexpr double kZeroNorm = 1e-15;

std::string to_string(ManifoldKind kind);
ManifoldKind manifold_kind_from_string(const std::string& name);

/// Geometry descriptor. Curvature is stored as the magnitude c >= 0 of the
/// sectional curvature -c; Euclidean manifolds always carry c = 0.
class ManifoldSpec {
public:
    /// Throws ConfigError when the invariants do not hold.
    ManifoldSpec(ManifoldKind kind, std::size_t dim, double curvature);

    static ManifoldSpec euclidean(std::size_t dim) { return {ManifoldKind::Euclidean, dim, 0.0}; }
    static ManifoldSpec poincare(std::size_t dim, double curvature) {
        return {ManifoldKind::PoincareBall, dim, curvature};
    }

    ManifoldKind kind() const noexcept { return kind_; }
    std::size_t dim() const noexcept { return dim_; }
    double curvature() const noexcept { return curvature_; }
    bool hyperbolic() const noexcept { return kind_ == ManifoldKind::PoincareBall; }

    /// Largest admissible Euclidean norm after projection with margin eps.
    double max_norm(double eps = kDefaultBallEps) const;

    friend bool operator==(const ManifoldSpec&, const ManifoldSpec&) = default;

private:
    ManifoldKind kind_;
    std::size_t dim_;
    double curvature_;
};

std::string describe(const ManifoldSpec& spec);

namespace kernels {

double dot(std::span<const double> x, std::span<const double> y);
double sq_norm(std::span<const double> x);
bool all_finite(std::span<const double> x);

/// True when x satisfies the point invariant of `spec`.
bool is_valid_point(const ManifoldSpec& spec, std::span<const double> x);

/// 2 / (1 - c|x|^2) on the ball, 1 for Euclidean.
double conformal_factor(const ManifoldSpec& spec, std::span<const double> x);

/// Mobius addition without the final projection. Reduces to x + y for c = 0.
void mobius_add(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y,
                std::span<double> out);

/// Geodesic distance.
double distance(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y);

/// Gradients of distance(x, y) with respect to x and y (ambient coordinates).
/// Writes zeros when x == y, the subgradient at the non-differentiable point.
void distance_grad(const ManifoldSpec& spec, std::span<const double> x,
                   std::span<const double> y, std::span<double> grad_x,
                   std::span<double> grad_y);

/// exp_x(v) followed by projection with margin eps.
void exp_map(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> v,
             std::span<double> out, double eps = kDefaultBallEps);

void log_map(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y,
             std::span<double> out);

/// In-place rescale onto the ball of radius (1 - eps)/sqrt(c) when outside it.
void project_to_ball(const ManifoldSpec& spec, std::span<double> x, double eps = kDefaultBallEps);

}  // namespace kernels

/// Coordinates constrained to the valid region of their manifold.
class ManifoldPoint {
public:
    /// Throws DomainError if `coords` is not a valid point, LengthMismatch on a size mismatch.
    ManifoldPoint(ManifoldSpec spec, std::vector<double> coords);

    static ManifoldPoint origin(const ManifoldSpec& spec);

    const ManifoldSpec& spec() const noexcept { return spec_; }
    std::span<const double> coords() const noexcept { return coords_; }
    std::size_t dim() const noexcept { return coords_.size(); }
    double operator[](std::size_t i) const { return coords_[i]; }

    /// Additive inverse; valid on both manifold kinds.
    ManifoldPoint operator-() const;

private:
    ManifoldSpec spec_;
    std::vector<double> coords_;
};

/// Element of the tangent space at `base`.
class TangentVector {
public:
    TangentVector(ManifoldPoint base, std::vector<double> coords);

    static TangentVector zero(const ManifoldPoint& base);

    const ManifoldPoint& base() const noexcept { return base_; }
    std::span<const double> coords() const noexcept { return coords_; }
    std::size_t dim() const noexcept { return coords_.size(); }
    double operator[](std::size_t i) const { return coords_[i]; }

private:
    ManifoldPoint base_;
    std::vector<double> coords_;
};

double conformal_factor(const ManifoldPoint& x);

/// x (+)_c y, projected with the default margin.
ManifoldPoint mobius_add(const ManifoldPoint& x, const ManifoldPoint& y);

double distance(const ManifoldPoint& x, const ManifoldPoint& y);

ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v, double eps = kDefaultBallEps);

TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y);

/// Rescales raw coordinates into the ball; Euclidean input passes through unchanged.
ManifoldPoint project_to_ball(std::span<const double> x, const ManifoldSpec& spec,
                              double eps = kDefaultBallEps);

}  // namespace mmctr
