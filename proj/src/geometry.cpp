#include "mmctr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mmctr/errors.hpp"

namespace mmctr {

std::string to_string(ManifoldKind kind) {
    return kind == ManifoldKind::Euclidean ? "euclidean" : "poincare";
}

ManifoldKind manifold_kind_from_string(const std::string& name) {
    if (name == "euclidean") return ManifoldKind::Euclidean;
    if (name == "poincare") return ManifoldKind::PoincareBall;
    throw ConfigError("unknown manifold kind '" + name + "' (expected euclidean|poincare)");
}

ManifoldSpec::ManifoldSpec(ManifoldKind kind, std::size_t dim, double curvature)
    : kind_(kind), dim_(dim), curvature_(curvature) {
    if (dim == 0) throw ConfigError("manifold dim must be >= 1");
    if (!std::isfinite(curvature)) throw ConfigError("manifold curvature must be finite");
    if (kind == ManifoldKind::PoincareBall && !(curvature > 0.0)) {
        throw ConfigError("poincare manifold requires curvature > 0");
    }
    if (kind == ManifoldKind::Euclidean && curvature != 0.0) {
        throw ConfigError("euclidean manifold requires curvature = 0");
    }
}

double ManifoldSpec::max_norm(double eps) const {
    if (!hyperbolic()) return std::numeric_limits<double>::infinity();
    return (1.0 - eps) / std::sqrt(curvature_);
}

std::string describe(const ManifoldSpec& spec) {
    std::ostringstream os;
    os << to_string(spec.kind()) << "(dim=" << spec.dim();
    if (spec.hyperbolic()) os << ", c=" << spec.curvature();
    os << ")";
    return os.str();
}

namespace kernels {

double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double sq_norm(std::span<const double> x) { return dot(x, x); }

bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

bool is_valid_point(const ManifoldSpec& spec, std::span<const double> x) {
    if (x.size() != spec.dim() || !all_finite(x)) return false;
    return !spec.hyperbolic() || spec.curvature() * sq_norm(x) < 1.0;
}

namespace {

void require_finite(std::span<const double> x, const char* what) {
    if (!all_finite(x)) throw DomainError(std::string(what) + " has non-finite coordinates");
}

// 1 - c|x|^2, checked to be positive.
double ball_gap(const ManifoldSpec& spec, std::span<const double> x) {
    const double gap = 1.0 - spec.curvature() * sq_norm(x);
    if (!(gap > 0.0)) throw DomainError("point outside the Poincare ball (c|x|^2 >= 1)");
    return gap;
}

double sq_dist(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

}  // namespace

double conformal_factor(const ManifoldSpec& spec, std::span<const double> x) {
    if (!spec.hyperbolic()) return 1.0;
    return 2.0 / ball_gap(spec, x);
}

void mobius_add(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y,
                std::span<double> out) {
    const double c = spec.curvature();
    const double xy = dot(x, y);
    const double xx = sq_norm(x);
    const double yy = sq_norm(y);
    const double den = 1.0 + 2.0 * c * xy + c * c * xx * yy;
    if (!(den > 1e-15)) throw DomainError("mobius_add denominator vanished");
    const double a = (1.0 + 2.0 * c * xy + c * yy) / den;
    const double b = (1.0 - c * xx) / den;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
}

double distance(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y) {
    const double delta = sq_dist(x, y);
    if (!spec.hyperbolic()) return std::sqrt(delta);

    const double c = spec.curvature();
    const double ax = ball_gap(spec, x);
    const double ay = ball_gap(spec, y);
    // |(-x) (+) y|^2 = delta / (c delta + ax ay), which avoids forming the
    // Mobius sum and keeps 1 - t accurate near the boundary.
    const double whole = c * delta + ax * ay;
    const double m = std::sqrt(delta / whole);
    if (m < kZeroNorm) return 0.0;
    const double t = std::sqrt(c) * m;
    // 2 artanh(t) = log1p(2t / (1 - t)), with 1 - t = ax ay / (whole (1 + t)).
    return std::log1p(2.0 * t * (1.0 + t) * whole / (ax * ay)) / std::sqrt(c);
}

void distance_grad(const ManifoldSpec& spec, std::span<const double> x,
                   std::span<const double> y, std::span<double> grad_x,
                   std::span<double> grad_y) {
    const std::size_t n = x.size();
    const double delta = sq_dist(x, y);
    if (std::sqrt(delta) < kZeroNorm) {
        std::fill(grad_x.begin(), grad_x.end(), 0.0);
        std::fill(grad_y.begin(), grad_y.end(), 0.0);
        return;
    }
    if (!spec.hyperbolic()) {
        const double inv = 1.0 / std::sqrt(delta);
        for (std::size_t i = 0; i < n; ++i) {
            grad_x[i] = (x[i] - y[i]) * inv;
            grad_y[i] = -grad_x[i];
        }
        return;
    }
    // d = arcosh(g) / sqrt(c) with g = 1 + 2 c delta / (ax ay).
    const double c = spec.curvature();
    const double ax = ball_gap(spec, x);
    const double ay = ball_gap(spec, y);
    const double g = 1.0 + 2.0 * c * delta / (ax * ay);
    const double scale = 4.0 / std::sqrt(2.0 * delta * ax * ay * (g + 1.0));
    for (std::size_t i = 0; i < n; ++i) {
        grad_x[i] = scale * ((x[i] - y[i]) + c * delta * x[i] / ax);
        grad_y[i] = scale * ((y[i] - x[i]) + c * delta * y[i] / ay);
    }
}

void exp_map(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> v,
             std::span<double> out, double eps) {
    require_finite(x, "exp_map base point");
    require_finite(v, "exp_map tangent vector");
    if (!spec.hyperbolic()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + v[i];
        return;
    }
    const double vn = std::sqrt(sq_norm(v));
    if (vn < kZeroNorm) {
        std::copy(x.begin(), x.end(), out.begin());
        return;
    }
    const double sc = std::sqrt(spec.curvature());
    const double lambda = conformal_factor(spec, x);
    const double s = std::tanh(sc * lambda * vn / 2.0) / (sc * vn);
    std::vector<double> step(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) step[i] = s * v[i];
    mobius_add(spec, x, step, out);
    project_to_ball(spec, out, eps);
}

void log_map(const ManifoldSpec& spec, std::span<const double> x, std::span<const double> y,
             std::span<double> out) {
    require_finite(x, "log_map base point");
    require_finite(y, "log_map target point");
    if (!spec.hyperbolic()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[i] - x[i];
        return;
    }
    std::vector<double> neg_x(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg_x[i] = -x[i];
    std::vector<double> m(x.size());
    mobius_add(spec, neg_x, y, m);
    const double mn = std::sqrt(sq_norm(m));
    if (mn < kZeroNorm) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    // (2 / (sqrt(c) lambda)) artanh(sqrt(c)|m|) = d(x, y) / lambda
    const double s = distance(spec, x, y) / (conformal_factor(spec, x) * mn);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * m[i];
}

void project_to_ball(const ManifoldSpec& spec, std::span<double> x, double eps) {
    require_finite(x, "project_to_ball input");
    if (!spec.hyperbolic()) return;
    const double c = spec.curvature();
    const double limit = (1.0 - eps) * (1.0 - eps);
    const double norm = std::sqrt(sq_norm(x));
    const double max_norm = spec.max_norm(eps);
    if (norm < max_norm) return;
    const double s = max_norm / norm;
    for (double& v : x) v *= s;
    // Rounding in the rescale can overshoot by an ulp.
    while (c * sq_norm(x) > limit) {
        for (double& v : x) v *= 1.0 - 1e-15;
    }
}

}  // namespace kernels

namespace {

void require_same_spec(const ManifoldSpec& a, const ManifoldSpec& b) {
    if (!(a == b)) throw SpecMismatch("spec mismatch: " + describe(a) + " vs " + describe(b));
}

}  // namespace

ManifoldPoint::ManifoldPoint(ManifoldSpec spec, std::vector<double> coords)
    : spec_(spec), coords_(std::move(coords)) {
    if (coords_.size() != spec_.dim()) {
        throw LengthMismatch("point has " + std::to_string(coords_.size()) +
                          " coordinates, manifold dim is " + std::to_string(spec_.dim()));
    }
    if (!kernels::all_finite(coords_)) throw DomainError("point has non-finite coordinates");
    if (!kernels::is_valid_point(spec_, coords_)) {
        throw DomainError("point outside the Poincare ball (c|x|^2 >= 1)");
    }
}

ManifoldPoint ManifoldPoint::origin(const ManifoldSpec& spec) {
    return {spec, std::vector<double>(spec.dim(), 0.0)};
}

ManifoldPoint ManifoldPoint::operator-() const {
    std::vector<double> neg(coords_.size());
    std::transform(coords_.begin(), coords_.end(), neg.begin(), [](double v) { return -v; });
    return {spec_, std::move(neg)};
}

TangentVector::TangentVector(ManifoldPoint base, std::vector<double> coords)
    : base_(std::move(base)), coords_(std::move(coords)) {
    if (coords_.size() != base_.dim()) {
        throw LengthMismatch("tangent vector dim does not match its base point");
    }
    if (!kernels::all_finite(coords_)) throw DomainError("tangent vector has non-finite coordinates");
}

TangentVector TangentVector::zero(const ManifoldPoint& base) {
    return {base, std::vector<double>(base.dim(), 0.0)};
}

double conformal_factor(const ManifoldPoint& x) {
    return kernels::conformal_factor(x.spec(), x.coords());
}

ManifoldPoint mobius_add(const ManifoldPoint& x, const ManifoldPoint& y) {
    require_same_spec(x.spec(), y.spec());
    std::vector<double> out(x.dim());
    kernels::mobius_add(x.spec(), x.coords(), y.coords(), out);
    kernels::project_to_ball(x.spec(), out);
    return {x.spec(), std::move(out)};
}

double distance(const ManifoldPoint& x, const ManifoldPoint& y) {
    require_same_spec(x.spec(), y.spec());
    return kernels::distance(x.spec(), x.coords(), y.coords());
}

ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v, double eps) {
    require_same_spec(x.spec(), v.base().spec());
    std::vector<double> out(x.dim());
    kernels::exp_map(x.spec(), x.coords(), v.coords(), out, eps);
    return {x.spec(), std::move(out)};
}

TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y) {
    require_same_spec(x.spec(), y.spec());
    std::vector<double> out(x.dim());
    kernels::log_map(x.spec(), x.coords(), y.coords(), out);
    return {x, std::move(out)};
}

ManifoldPoint project_to_ball(std::span<const double> x, const ManifoldSpec& spec, double eps) {
    if (x.size() != spec.dim()) throw LengthMismatch("project_to_ball: dimension mismatch");
    std::vector<double> out(x.begin(), x.end());
    kernels::project_to_ball(spec, out, eps);
    return {spec, std::move(out)};
}

}  // namespace mmctr
