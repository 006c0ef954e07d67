#include "mmctr/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mmctr/errors.hpp"

namespace mmctr {

std::string to_string(UpdateMode mode) {
    return mode == UpdateMode::Riemannian ? "riemannian" : "tangent_origin";
}

UpdateMode update_mode_from_string(const std::string& name) {
    if (name == "riemannian") return UpdateMode::Riemannian;
    if (name == "tangent_origin") return UpdateMode::TangentOrigin;
    throw ConfigError("unknown update_mode '" + name + "' (expected riemannian|tangent_origin)");
}

std::string to_string(LrSchedule schedule) {
    return schedule == LrSchedule::Linear ? "linear" : "constant";
}

LrSchedule lr_schedule_from_string(const std::string& name) {
    if (name == "constant") return LrSchedule::Constant;
    if (name == "linear") return LrSchedule::Linear;
    throw ConfigError("unknown lr_schedule '" + name + "' (expected constant|linear)");
}

double scheduled_learning_rate(const OptimizerConfig& cfg, std::size_t step, std::size_t total_steps) {
    if (cfg.lr_schedule == LrSchedule::Constant || total_steps == 0) return cfg.learning_rate;
    const double done = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
    return cfg.learning_rate * (1.0 - done);
}

void OptimizerConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate: must be a finite value > 0");
    }
    if (!(ball_eps > 0.0 && ball_eps <= 1e-2)) {
        throw ConfigError("ball_eps: must lie in (0, 1e-2]");
    }
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad_clip: must be > 0 when set");
    if (!(attention_weight_decay >= 0.0) || !std::isfinite(attention_weight_decay)) {
        throw ConfigError("attention_weight_decay: must be a finite value >= 0");
    }
}

namespace kernels {

namespace {

void clip_norm(std::span<double> g, const std::optional<double>& clip) {
    if (!clip) return;
    const double n = std::sqrt(sq_norm(g));
    if (n > *clip) {
        const double s = *clip / n;
        for (double& v : g) v *= s;
    }
}

void require_finite_grad(std::span<const double> g) {
    if (!all_finite(g)) throw DomainError("gradient has non-finite coordinates");
}

}  // namespace

void riemannian_grad(const ManifoldSpec& spec, std::span<const double> x,
                     std::span<const double> ambient_grad, std::span<double> out) {
    require_finite_grad(ambient_grad);
    double s = 1.0;
    if (spec.hyperbolic()) {
        const double gap = 1.0 - spec.curvature() * sq_norm(x);
        if (!(gap > 0.0)) throw DomainError("point outside the Poincare ball (c|x|^2 >= 1)");
        s = gap * gap / 4.0;
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * ambient_grad[i];
}

void rsgd_step(const ManifoldSpec& spec, std::span<double> x, std::span<const double> ambient_grad,
               const OptimizerConfig& cfg) {
    std::vector<double> v(x.size());
    riemannian_grad(spec, x, ambient_grad, v);
    clip_norm(v, cfg.grad_clip);
    for (double& e : v) e *= -cfg.learning_rate;
    std::vector<double> next(x.size());
    exp_map(spec, x, v, next, cfg.ball_eps);
    std::copy(next.begin(), next.end(), x.begin());
}

void tangent_origin_step(const ManifoldSpec& spec, std::span<double> x,
                         std::span<const double> ambient_grad, const OptimizerConfig& cfg) {
    require_finite_grad(ambient_grad);
    const std::size_t n = x.size();
    if (!spec.hyperbolic()) {
        std::vector<double> g(ambient_grad.begin(), ambient_grad.end());
        clip_norm(g, cfg.grad_clip);
        for (std::size_t i = 0; i < n; ++i) x[i] -= cfg.learning_rate * g[i];
        return;
    }
    const double a = std::sqrt(spec.curvature());
    std::vector<double> origin(n, 0.0);
    std::vector<double> v(n);
    log_map(spec, origin, x, v);

    // x = phi(r) v with phi(r) = tanh(a r) / (a r), r = |v|. The chain rule
    // gives dL/dv = phi g + (phi'(r) / r) <v, g> v.
    const double r = std::sqrt(sq_norm(v));
    const double z = a * r;
    double phi;
    double dphi_over_r;
    if (z < 1e-3) {
        phi = 1.0 - z * z / 3.0;
        dphi_over_r = a * a * (-2.0 / 3.0 + 8.0 * z * z / 15.0);
    } else {
        const double th = std::tanh(z);
        const double sech2 = 1.0 - th * th;
        phi = th / z;
        dphi_over_r = (z * sech2 - th) / (a * r * r * r);
    }
    const double vg = dot(v, ambient_grad);
    std::vector<double> gv(n);
    for (std::size_t i = 0; i < n; ++i) gv[i] = phi * ambient_grad[i] + dphi_over_r * vg * v[i];
    clip_norm(gv, cfg.grad_clip);
    for (std::size_t i = 0; i < n; ++i) v[i] -= cfg.learning_rate * gv[i];
    exp_map(spec, origin, v, x, cfg.ball_eps);
}

}  // namespace kernels

TangentVector riemannian_grad(const ManifoldPoint& x, std::span<const double> ambient_grad) {
    if (ambient_grad.size() != x.dim()) throw LengthMismatch("gradient dim does not match point dim");
    std::vector<double> out(x.dim());
    kernels::riemannian_grad(x.spec(), x.coords(), ambient_grad, out);
    return {x, std::move(out)};
}

ManifoldPoint rsgd_step(const ManifoldPoint& x, std::span<const double> ambient_grad,
                        const OptimizerConfig& cfg) {
    if (ambient_grad.size() != x.dim()) throw LengthMismatch("gradient dim does not match point dim");
    std::vector<double> out(x.coords().begin(), x.coords().end());
    kernels::rsgd_step(x.spec(), out, ambient_grad, cfg);
    return {x.spec(), std::move(out)};
}

ManifoldPoint tangent_origin_step(const ManifoldPoint& x, std::span<const double> ambient_grad,
                                  const OptimizerConfig& cfg) {
    if (ambient_grad.size() != x.dim()) throw LengthMismatch("gradient dim does not match point dim");
    std::vector<double> out(x.coords().begin(), x.coords().end());
    kernels::tangent_origin_step(x.spec(), out, ambient_grad, cfg);
    return {x.spec(), std::move(out)};
}

namespace {

GradientCheckReport compare(const ScalarFn& fn, std::span<const double> analytic,
                            std::span<const double> at, double h, double abs_floor) {
    GradientCheckReport report;
    report.step = h;
    report.per_coordinate.resize(at.size());
    report.numeric.resize(at.size());
    std::vector<double> probe(at.begin(), at.end());
    for (std::size_t i = 0; i < at.size(); ++i) {
        probe[i] = at[i] + h;
        const double up = fn(probe);
        probe[i] = at[i] - h;
        const double down = fn(probe);
        probe[i] = at[i];
        const double fd = (up - down) / (2.0 * h);
        const double abs_err = std::abs(fd - analytic[i]);
        const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
        const double rel = abs_err <= abs_floor ? 0.0 : abs_err / scale;
        report.numeric[i] = fd;
        report.per_coordinate[i] = rel;
        report.max_abs_err = std::max(report.max_abs_err, abs_err);
        report.max_rel_err = std::max(report.max_rel_err, rel);
        if (scale > 0.0) report.max_unfloored_rel_err = std::max(report.max_unfloored_rel_err, abs_err / scale);
    }
    return report;
}

void check_inputs(std::span<const double> analytic, std::span<const double> at, double h) {
    if (analytic.size() != at.size()) throw LengthMismatch("analytic gradient size mismatch");
    if (!(h >= 1e-7 && h <= 1e-3)) throw ConfigError("finite-difference step must lie in [1e-7, 1e-3]");
}

bool perturbations_inside(const ManifoldSpec& spec, std::span<const double> x, double h) {
    if (!spec.hyperbolic()) return true;
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (double sign : {1.0, -1.0}) {
            probe[i] = x[i] + sign * h;
            if (!kernels::is_valid_point(spec, probe)) return false;
        }
        probe[i] = x[i];
    }
    return true;
}

}  // namespace

GradientCheckReport finite_difference_check(const ScalarFn& fn, std::span<const double> analytic,
                                            std::span<const double> at, double h,
                                            double abs_floor) {
    check_inputs(analytic, at, h);
    return compare(fn, analytic, at, h, abs_floor);
}

GradientCheckReport gradient_check(const ScalarFn& fn, std::span<const double> analytic,
                                   const ManifoldPoint& x, double h, double abs_floor) {
    check_inputs(analytic, x.coords(), h);
    if (!perturbations_inside(x.spec(), x.coords(), h)) {
        h /= 10.0;
        if (!perturbations_inside(x.spec(), x.coords(), h)) {
            throw DomainError("finite-difference probes leave the ball even after shrinking h");
        }
    }
    return compare(fn, analytic, x.coords(), h, abs_floor);
}

}  // namespace mmctr
