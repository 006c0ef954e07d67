#include "mmctr/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "mmctr/geometry.hpp"
#include "mmctr/model.hpp"
#include "mmctr/optim.hpp"
#include "mmctr/rng.hpp"

namespace mmctr {

namespace {

using Vec = std::vector<double>;

Vec random_direction(Rng& rng, std::size_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(dim);
    double n = 0.0;
    while (n < 1e-12) {
        for (double& e : v) e = normal(rng);
        n = std::sqrt(kernels::sq_norm(v));
    }
    for (double& e : v) e /= n;
    return v;
}

/// Uniform in the ball of the given Euclidean radius.
Vec random_in_ball(Rng& rng, std::size_t dim, double radius) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Vec v = random_direction(rng, dim);
    const double r = radius * std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
    for (double& e : v) e *= r;
    return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

class Tracker {
public:
    Tracker(std::string name, double tol) {
        r_.name = std::move(name);
        r_.tolerance = tol;
    }

    void observe(double err) {
        ++r_.trials;
        if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
        r_.worst = std::max(r_.worst, err);
    }

    PropertyResult finish(std::string detail = {}) {
        r_.passed = r_.worst <= r_.tolerance;
        r_.detail = std::move(detail);
        return r_;
    }

private:
    PropertyResult r_;
};

ManifoldSpec random_ball_spec(Rng& rng, std::size_t dim, double c_lo, double c_hi) {
    std::uniform_real_distribution<double> log_c(std::log(c_lo), std::log(c_hi));
    return ManifoldSpec::poincare(dim, std::exp(log_c(rng)));
}

std::size_t random_dim(Rng& rng) { return std::uniform_int_distribution<std::size_t>(1, 10)(rng); }

}  // namespace

std::vector<PropertyResult> check_geometry_properties(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "geometry"));
    std::vector<PropertyResult> out;

    {
        Tracker t("mobius_identities", 1e-15);
        for (int i = 0; i < 1000; ++i) {
            const auto spec = random_ball_spec(rng, random_dim(rng), 0.1, 10.0);
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), 0.9 / std::sqrt(spec.curvature())));
            const auto zero = ManifoldPoint::origin(spec);
            t.observe(max_abs_diff(mobius_add(x, zero).coords(), x.coords()));
            t.observe(max_abs_diff(mobius_add(zero, x).coords(), x.coords()));
            t.observe(max_abs_diff(mobius_add(-x, x).coords(), zero.coords()));
        }
        out.push_back(t.finish("x(+)0 = x, 0(+)x = x, (-x)(+)x = 0"));
    }
    {
        Tracker t("left_cancellation", 1e-9);
        for (int i = 0; i < 1000; ++i) {
            const auto spec = random_ball_spec(rng, random_dim(rng), 0.1, 10.0);
            const double r = 0.7 / std::sqrt(spec.curvature());
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), r));
            const ManifoldPoint y(spec, random_in_ball(rng, spec.dim(), r));
            t.observe(max_abs_diff(mobius_add(-x, mobius_add(x, y)).coords(), y.coords()));
        }
        out.push_back(t.finish("(-x)(+)(x(+)y) = y"));
    }
    {
        // Reported as the ratio of the error to its allowance 1e-8 + 1e-6 |v|.
        Tracker t("exp_log_inversion", 1.0);
        for (int i = 0; i < 1000; ++i) {
            const auto spec = random_ball_spec(rng, random_dim(rng), 0.25, 4.0);
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), 0.7 / std::sqrt(spec.curvature())));
            const TangentVector v(x, random_in_ball(rng, spec.dim(), 1.0));
            const TangentVector back = log_map(x, exp_map(x, v));
            double err = 0.0;
            for (std::size_t k = 0; k < v.dim(); ++k) err += (back[k] - v[k]) * (back[k] - v[k]);
            const double allowance = 1e-8 + 1e-6 * std::sqrt(kernels::sq_norm(v.coords()));
            t.observe(std::sqrt(err) / allowance);
        }
        out.push_back(t.finish("|log_x(exp_x(v)) - v| <= 1e-8 + 1e-6|v|"));
    }
    {
        Tracker sym("metric_symmetry", 1e-12);
        Tracker tri("metric_triangle", 1e-9);
        Tracker self("metric_identity", 0.0);
        Tracker nonneg("metric_nonnegative", 0.0);
        for (int i = 0; i < 10000; ++i) {
            const bool euclid = i % 4 == 0;
            const std::size_t dim = random_dim(rng);
            const auto spec = euclid ? ManifoldSpec::euclidean(dim) : random_ball_spec(rng, dim, 0.1, 10.0);
            const double r = euclid ? 3.0 : 0.95 / std::sqrt(spec.curvature());
            const ManifoldPoint x(spec, random_in_ball(rng, dim, r));
            const ManifoldPoint y(spec, random_in_ball(rng, dim, r));
            const ManifoldPoint z(spec, random_in_ball(rng, dim, r));
            const double dxy = distance(x, y);
            sym.observe(std::abs(dxy - distance(y, x)));
            tri.observe(distance(x, z) - dxy - distance(y, z));
            self.observe(distance(x, x));
            nonneg.observe(-std::min(0.0, dxy));
        }
        out.push_back(sym.finish("|d(x,y) - d(y,x)| over 10^4 triples"));
        out.push_back(tri.finish("d(x,z) - d(x,y) - d(y,z)"));
        out.push_back(self.finish("d(x,x) = 0"));
        out.push_back(nonneg.finish("d(x,y) >= 0"));
    }
    {
        Tracker t("flat_limit", 1e-4);
        for (int i = 0; i < 1000; ++i) {
            const auto spec = ManifoldSpec::poincare(random_dim(rng), 1e-8);
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), 0.5));
            const ManifoldPoint y(spec, random_in_ball(rng, spec.dim(), 0.5));
            Vec diff(spec.dim());
            for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = x[k] - y[k];
            t.observe(std::abs(distance(x, y) - 2.0 * std::sqrt(kernels::sq_norm(diff))));
        }
        out.push_back(t.finish("c = 1e-8: d_c(x,y) vs 2|x - y|"));
    }
    {
        // Margin violation of c|out|^2 against (1 - eps)^2; must never be positive.
        Tracker t("projection_feasibility", 0.0);
        std::uniform_real_distribution<double> big(0.0, 50.0);
        for (int i = 0; i < 2000; ++i) {
            const auto spec = random_ball_spec(rng, random_dim(rng), 0.1, 10.0);
            const double c = spec.curvature();
            const double edge = spec.max_norm();
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), edge));
            const ManifoldPoint y(spec, random_in_ball(rng, spec.dim(), edge));
            Vec vraw = random_direction(rng, spec.dim());
            const double scale = big(rng);
            for (double& e : vraw) e *= scale;
            const TangentVector v(x, vraw);
            const double limit = (1.0 - kDefaultBallEps) * (1.0 - kDefaultBallEps);
            t.observe(std::max(0.0, c * kernels::sq_norm(exp_map(x, v).coords()) - limit));
            t.observe(std::max(0.0, c * kernels::sq_norm(mobius_add(x, y).coords()) - limit));
        }
        out.push_back(t.finish("exp_map / mobius_add outputs stay within the eps margin"));
    }
    return out;
}

std::vector<PropertyResult> check_optimizer_properties(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "optimizer"));
    std::vector<PropertyResult> out;
    {
        Tracker t("riemannian_scale", 1e-15);
        for (int i = 0; i < 1000; ++i) {
            const auto spec = random_ball_spec(rng, random_dim(rng), 0.1, 10.0);
            const ManifoldPoint x(spec, random_in_ball(rng, spec.dim(), spec.max_norm()));
            Vec g = random_direction(rng, spec.dim());
            const auto rg = riemannian_grad(x, g);
            const double ratio = rg[0] / g[0];
            double violation = 0.0;
            if (!(ratio > 0.0 && ratio <= 0.25)) violation = 1.0;
            for (std::size_t k = 0; k < g.size(); ++k) violation = std::max(violation, std::abs(rg[k] - ratio * g[k]));
            t.observe(violation);
            const auto at_origin = riemannian_grad(ManifoldPoint::origin(spec), g);
            for (std::size_t k = 0; k < g.size(); ++k) t.observe(at_origin[k] == 0.25 * g[k] ? 0.0 : 1.0);
        }
        out.push_back(t.finish("grad = s * ambient with s in (0, 1/4], s = 1/4 at the origin"));
    }
    {
        // 10^4 consecutive steps per sequence; violation measured as
        // c|x|^2 - (1 - eps)^2 for the iterate and as a non-finite flag.
        Tracker t("rsgd_feasibility", 0.0);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::size_t sequences = 0;
        for (double c : {0.1, 1.0, 10.0}) {
            for (int mode = 0; mode < 3; ++mode) {
                const auto spec = ManifoldSpec::poincare(4, c);
                OptimizerConfig cfg;
                cfg.learning_rate = 0.1;
                Vec x(4, 0.0);
                EmbeddingTable table(spec, EntityKind::Ad, 1);
                const double limit = (1.0 - cfg.ball_eps) * (1.0 - cfg.ball_eps);
                for (int step = 0; step < 10000; ++step) {
                    Vec g = random_direction(rng, 4);
                    double norm = 10.0 * unit(rng);
                    if (mode == 1) {
                        // Push straight outward with a huge gradient.
                        const double xn = std::sqrt(kernels::sq_norm(x));
                        if (xn > 0.0) {
                            for (std::size_t k = 0; k < 4; ++k) g[k] = -x[k] / xn;
                        }
                        norm = 1e8;
                    } else if (mode == 2) {
                        norm = std::pow(10.0, 12.0 * unit(rng) - 4.0);
                    }
                    for (double& e : g) e *= norm;
                    kernels::rsgd_step(spec, x, g, cfg);
                    t.observe(std::max(0.0, c * kernels::sq_norm(x) - limit));
                    t.observe(kernels::all_finite(x) ? 0.0 : 1.0);

                    Vec row = table.row_as_double(0);
                    kernels::rsgd_step(spec, row, g, cfg);
                    table.store_row(0, row, cfg.ball_eps);
                    const Vec stored = table.row_as_double(0);
                    t.observe(kernels::all_finite(stored) ? 0.0 : 1.0);
                    t.observe(c * kernels::sq_norm(stored) < 1.0 ? 0.0 : 1.0);
                }
                ++sequences;
            }
        }
        out.push_back(t.finish(std::to_string(sequences) + " sequences of 10^4 steps, eta = 0.1"));
    }
    {
        // Value of f(x_next) - f(x) for f = d(x, y)^2; must be negative.
        Tracker t("rsgd_descent", 0.0);
        std::uniform_real_distribution<double> lr(1e-4, 1e-2);
        double worst_decrease = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < 1000; ++i) {
            const bool euclid = i % 4 == 0;
            const std::size_t dim = random_dim(rng);
            const auto spec = euclid ? ManifoldSpec::euclidean(dim) : random_ball_spec(rng, dim, 0.1, 10.0);
            const double r = euclid ? 3.0 : 0.9 / std::sqrt(spec.curvature());
            const Vec x = random_in_ball(rng, dim, r);
            const Vec y = random_in_ball(rng, dim, r);
            const double d = kernels::distance(spec, x, y);
            if (d < 1e-6) continue;
            Vec gx(dim), gy(dim);
            kernels::distance_grad(spec, x, y, gx, gy);
            for (double& e : gx) e *= 2.0 * d;
            OptimizerConfig cfg;
            cfg.learning_rate = lr(rng);
            Vec next = x;
            kernels::rsgd_step(spec, next, gx, cfg);
            const double d_next = kernels::distance(spec, next, y);
            const double change = d_next * d_next - d * d;
            worst_decrease = std::max(worst_decrease, change);
            t.observe(change < 0.0 ? 0.0 : 1.0);
        }
        char buf[96];
        std::snprintf(buf, sizeof buf, "largest change of d(x,y)^2 after one step: %.3e", worst_decrease);
        out.push_back(t.finish(buf));
    }
    return out;
}

namespace {

struct GradInstance {
    ManifoldSet set;
    Vec user;
    Vec ad;
    FusionParams fusion;
    int label;
};

/// Flattens (user, ad, bias, scale, attention, global bias) into one vector.
Vec flatten(const Vec& user, const Vec& ad, const FusionParams& f) {
    Vec p(user);
    p.insert(p.end(), ad.begin(), ad.end());
    p.insert(p.end(), f.manifold_bias.begin(), f.manifold_bias.end());
    p.insert(p.end(), f.manifold_scale.begin(), f.manifold_scale.end());
    p.insert(p.end(), f.attention.begin(), f.attention.end());
    p.push_back(f.global_bias);
    return p;
}

double loss_at(const GradInstance& g, std::span<const double> p) {
    const std::size_t td = g.set.total_dim();
    const std::size_t m = g.set.size();
    FusionParams f = FusionParams::zeros(m);
    std::size_t off = 2 * td;
    for (std::size_t i = 0; i < m; ++i) f.manifold_bias[i] = p[off + i];
    off += m;
    for (std::size_t i = 0; i < m; ++i) f.manifold_scale[i] = p[off + i];
    off += m;
    for (std::size_t i = 0; i < m * m; ++i) f.attention[i] = p[off + i];
    f.global_bias = p[off + m * m];
    return pair_loss(g.set, p.subspan(0, td), p.subspan(td, td), f, g.label);
}

}  // namespace

std::vector<PropertyResult> check_gradient_properties(std::uint64_t seed, std::size_t instances) {
    Rng rng(derive_seed(seed, "gradients"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.3, 2.0);
    Tracker t("model_gradient_check", 1e-4);
    std::size_t coords = 0;
    double worst_abs = 0.0;
    double worst_unfloored = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        std::vector<ManifoldSpec> specs;
        switch (i % 4) {
            case 0: specs = {ManifoldSpec::euclidean(random_dim(rng))}; break;
            case 1: specs = {random_ball_spec(rng, random_dim(rng), 0.25, 4.0)}; break;
            case 2:
                specs = {ManifoldSpec::euclidean(random_dim(rng)), random_ball_spec(rng, random_dim(rng), 0.25, 4.0)};
                break;
            default:
                specs = {random_ball_spec(rng, random_dim(rng), 0.25, 4.0), ManifoldSpec::euclidean(random_dim(rng)),
                         random_ball_spec(rng, random_dim(rng), 0.25, 4.0)};
        }
        GradInstance g{ManifoldSet(specs), {}, {}, FusionParams::zeros(specs.size()), static_cast<int>(i % 2)};
        for (std::size_t m = 0; m < specs.size(); ++m) {
            const double r = specs[m].hyperbolic() ? 0.5 / std::sqrt(specs[m].curvature()) : 1.0;
            const Vec u = random_in_ball(rng, specs[m].dim(), r);
            const Vec a = random_in_ball(rng, specs[m].dim(), r);
            g.user.insert(g.user.end(), u.begin(), u.end());
            g.ad.insert(g.ad.end(), a.begin(), a.end());
            g.fusion.manifold_bias[m] = 0.5 * normal(rng);
            g.fusion.manifold_scale[m] = scale(rng);
        }
        for (double& w : g.fusion.attention) w = 0.5 * normal(rng);
        g.fusion.global_bias = 0.5 * normal(rng);

        PairGradient pg;
        pair_loss(g.set, g.user, g.ad, g.fusion, g.label, &pg);
        const Vec analytic = flatten(pg.user, pg.ad, pg.fusion);
        const Vec at = flatten(g.user, g.ad, g.fusion);
        const auto report = finite_difference_check([&](std::span<const double> p) { return loss_at(g, p); },
                                                    analytic, at, 1e-5, 1e-8);
        t.observe(report.max_rel_err);
        worst_abs = std::max(worst_abs, report.max_abs_err);
        worst_unfloored = std::max(worst_unfloored, report.max_unfloored_rel_err);
        coords += at.size();
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, ", largest abs error %.2e, largest unfloored rel error %.2e", worst_abs,
                  worst_unfloored);
    return {t.finish(std::to_string(coords) + " coordinates (rows + fusion), h = 1e-5, abs floor 1e-8" + buf)};
}

std::vector<PropertyResult> run_selftest(std::uint64_t seed) {
    auto all = check_geometry_properties(seed);
    for (auto& r : check_optimizer_properties(seed)) all.push_back(std::move(r));
    for (auto& r : check_gradient_properties(seed)) all.push_back(std::move(r));
    return all;
}

void print_results(std::ostream& out, const std::vector<PropertyResult>& results) {
    char buf[256];
    for (const auto& r : results) {
        std::snprintf(buf, sizeof buf, "%s %-24s worst=%.3e tol=%.1e trials=%zu", r.passed ? "PASS" : "FAIL",
                      r.name.c_str(), r.worst, r.tolerance, r.trials);
        out << buf;
        if (!r.detail.empty()) out << "  (" << r.detail << ")";
        out << '\n';
    }
}

bool all_passed(const std::vector<PropertyResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const PropertyResult& r) { return r.passed; });
}

}  // namespace mmctr
