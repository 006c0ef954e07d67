#include <doctest.h>

#include <cmath>
#include <random>

#include "mmctr/errors.hpp"
#include "mmctr/optim.hpp"
#include "oracles.hpp"

using namespace mmctr;
using oracle::Vec;

TEST_CASE("optimizer config validation") {
    OptimizerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.ball_eps = 0.02;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.grad_clip = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.attention_weight_decay = -0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(update_mode_from_string("adam"), ConfigError);
    CHECK_THROWS_AS(lr_schedule_from_string("cosine"), ConfigError);
}

TEST_CASE("learning rate schedules") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.4;
    CHECK(scheduled_learning_rate(cfg, 7, 10) == 0.4);
    cfg.lr_schedule = LrSchedule::Linear;
    CHECK(scheduled_learning_rate(cfg, 0, 10) == 0.4);
    CHECK(scheduled_learning_rate(cfg, 5, 10) == doctest::Approx(0.2));
    CHECK(scheduled_learning_rate(cfg, 9, 10) == doctest::Approx(0.04));
}

TEST_CASE("riemannian gradient examples") {
    const ManifoldSpec ball = ManifoldSpec::poincare(2, 1.0);
    const auto g0 = riemannian_grad(ManifoldPoint::origin(ball), Vec{1.0, 0.0});
    CHECK(g0[0] == 0.25);
    CHECK(g0[1] == 0.0);
    const auto g1 = riemannian_grad(ManifoldPoint(ball, {0.5, 0.5}), Vec{2.0, 0.0});
    CHECK(g1[0] == doctest::Approx(0.125).epsilon(1e-15));
    const auto g2 = riemannian_grad(ManifoldPoint(ManifoldSpec::euclidean(2), {3.0, 3.0}), Vec{1.5, -2.0});
    CHECK(g2[0] == 1.5);
    CHECK(g2[1] == -2.0);
    CHECK_THROWS_AS(riemannian_grad(ManifoldPoint::origin(ball), Vec{std::nan(""), 0.0}), DomainError);
    CHECK_THROWS_AS(riemannian_grad(ManifoldPoint::origin(ball), Vec{1.0}), LengthMismatch);
}

TEST_CASE("rsgd examples") {
    OptimizerConfig cfg;
    cfg.learning_rate = 0.1;
    const ManifoldSpec ball = ManifoldSpec::poincare(2, 1.0);
    const auto o = ManifoldPoint::origin(ball);
    const auto y = rsgd_step(o, Vec{1.0, 0.0}, cfg);
    // Composed by hand: riemannian gradient (0.25, 0), step -0.025, exp at the origin is tanh.
    CHECK(y[0] == doctest::Approx(-std::tanh(0.025)).epsilon(1e-15));
    CHECK(y[0] == doctest::Approx(-0.0249948).epsilon(1e-6));

    const auto x = ManifoldPoint(ball, {0.3, -0.1});
    const auto same = rsgd_step(x, Vec{0.0, 0.0}, cfg);
    CHECK(same[0] == x[0]);
    CHECK(same[1] == x[1]);

    cfg.learning_rate = 0.5;
    const auto f = rsgd_step(ManifoldPoint(ManifoldSpec::euclidean(2), {1.0, 1.0}), Vec{1.0, 0.0}, cfg);
    CHECK(f[0] == 0.5);
    CHECK(f[1] == 1.0);
}

TEST_CASE("gradient clipping bounds the riemannian step") {
    OptimizerConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.grad_clip = 0.1;
    const auto f = rsgd_step(ManifoldPoint(ManifoldSpec::euclidean(2), {0.0, 0.0}), Vec{30.0, 40.0}, cfg);
    CHECK(f[0] == doctest::Approx(-0.06));
    CHECK(f[1] == doctest::Approx(-0.08));
}

TEST_CASE("rsgd descends on squared distance") {
    std::mt19937_64 rng(17);
    OptimizerConfig cfg;
    cfg.learning_rate = 1e-2;
    const ManifoldSpec ball = ManifoldSpec::poincare(3, 1.0);
    for (int t = 0; t < 200; ++t) {
        const auto x = ManifoldPoint(ball, oracle::random_in_ball(rng, 3, 0.7));
        const auto y = ManifoldPoint(ball, oracle::random_in_ball(rng, 3, 0.7));
        Vec gx(3), gy(3);
        kernels::distance_grad(ball, x.coords(), y.coords(), gx, gy);
        const double d = distance(x, y);
        for (double& e : gx) e *= 2.0 * d;
        const auto next = rsgd_step(x, gx, cfg);
        CHECK(std::pow(distance(next, y), 2) < d * d);
    }
}

TEST_CASE("tangent-origin update follows the chain rule") {
    // Rows are parameterized as x = exp_0(v); one step of plain SGD on v must
    // match a numerically differentiated loss composed through exp_0.
    const double c = 1.3;
    const ManifoldSpec ball = ManifoldSpec::poincare(3, c);
    const Vec target{0.2, -0.1, 0.3};
    auto loss_of_v = [&](const Vec& v) {
        Vec x(3);
        kernels::exp_map(ball, Vec(3, 0.0), v, x);
        return oracle::arcosh_distance(c, x, target);
    };
    for (const Vec& start : {Vec{0.3, 0.1, -0.2}, Vec{1e-5, 2e-5, 0.0}}) {
        Vec x(3);
        kernels::exp_map(ball, Vec(3, 0.0), start, x);
        Vec g(3), unused(3);
        kernels::distance_grad(ball, x, target, g, unused);

        OptimizerConfig cfg;
        cfg.learning_rate = 1e-3;
        Vec stepped = x;
        kernels::tangent_origin_step(ball, stepped, g, cfg);

        const Vec grad_v = oracle::numeric_gradient(loss_of_v, start, 1e-7);
        Vec v_next(3);
        for (std::size_t i = 0; i < 3; ++i) v_next[i] = start[i] - cfg.learning_rate * grad_v[i];
        Vec expected(3);
        kernels::exp_map(ball, Vec(3, 0.0), v_next, expected);
        for (std::size_t i = 0; i < 3; ++i) CHECK(stepped[i] == doctest::Approx(expected[i]).epsilon(1e-7));
    }
}

TEST_CASE("finite-difference checker") {
    const Vec y{0.3, -0.2};
    const auto sq_dist = [&](std::span<const double> p) { return oracle::sq_diff(p, y); };
    const Vec x{0.1, 0.4};
    const Vec analytic{2.0 * (x[0] - y[0]), 2.0 * (x[1] - y[1])};
    const auto report = finite_difference_check(sq_dist, analytic, x);
    CHECK(report.max_rel_err <= 1e-6);
    CHECK(report.passed(1e-6));

    const auto constant = finite_difference_check([](std::span<const double>) { return 3.0; }, Vec{0.0, 0.0}, x);
    CHECK(constant.max_abs_err <= 1e-8);

    const Vec wrong{analytic[0] * 1.01, analytic[1]};
    CHECK_FALSE(finite_difference_check(sq_dist, wrong, x).passed(1e-4));
    CHECK_THROWS_AS(finite_difference_check(sq_dist, analytic, x, 1e-2), ConfigError);
}

TEST_CASE("gradient check of squared ball distance") {
    const double c = 1.0;
    const ManifoldSpec ball = ManifoldSpec::poincare(2, c);
    const Vec y{-0.2, 0.5};
    const auto x = ManifoldPoint(ball, {0.6, 0.3});
    Vec gx(2), gy(2);
    kernels::distance_grad(ball, x.coords(), y, gx, gy);
    const double d = distance(x, ManifoldPoint(ball, y));
    for (double& e : gx) e *= 2.0 * d;
    const auto fn = [&](std::span<const double> p) { return std::pow(oracle::arcosh_distance(c, p, y), 2); };
    CHECK(gradient_check(fn, gx, x).max_rel_err <= 1e-4);
}

TEST_CASE("gradient check near the boundary shrinks the step, then gives up") {
    const ManifoldSpec ball = ManifoldSpec::poincare(1, 1.0);
    const auto fn = [](std::span<const double> p) { return p[0]; };
    const auto near = ManifoldPoint(ball, {1.0 - 5e-6});
    const auto report = gradient_check(fn, Vec{1.0}, near, 1e-5);
    CHECK(report.step == doctest::Approx(1e-6));
    const auto nearer = ManifoldPoint(ball, {1.0 - 5e-7});
    CHECK_THROWS_AS(gradient_check(fn, Vec{1.0}, nearer, 1e-5), DomainError);
}
