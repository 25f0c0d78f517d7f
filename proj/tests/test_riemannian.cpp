#include <catch2/catch_amalgamated.hpp>

#include <jkoflow/riemannian.hpp>
#include <jkoflow/slope.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace jkoflow;
using Catch::Matchers::WithinAbs;

namespace {

Vec unit(Vec v) { return vec_scaled(v, 1.0 / vec_norm(v)); }

double vec_diff_norm(const Vec& a, const Vec& b) { return vec_norm(vec_axpy(a, b, -1.0)); }

// E = z + 0.3 x^2 restricted to the sphere
ObjectiveFn tilted_sphere_objective(const Manifold& m, bool with_hessian) {
    auto value = [](const Vec& x) { return x[2] + 0.3 * x[0] * x[0]; };
    auto grad = [](const Vec& x) { return Vec{0.6 * x[0], 0.0, 1.0}; };
    std::function<SymMatrix(const Vec&)> hess;
    if (with_hessian) hess = [](const Vec&) { return SymMatrix::diagonal({0.6, 0.0, 0.0}); };
    return make_objective(m, value, grad, hess, {unit({0.5, -0.4, 0.7})});
}

// E = |x|^2/2 + |x|^4/4 on the plane
ObjectiveFn plane_objective(const Manifold& m) {
    auto value = [](const Vec& x) {
        const double r2 = vec_dot(x, x);
        return 0.5 * r2 + 0.25 * r2 * r2;
    };
    auto grad = [](const Vec& x) { return vec_scaled(x, 1.0 + vec_dot(x, x)); };
    auto hess = [](const Vec& x) {
        const double r2 = vec_dot(x, x);
        return SymMatrix(2, {1.0 + r2 + 2.0 * x[0] * x[0], 2.0 * x[0] * x[1],
                             2.0 * x[0] * x[1], 1.0 + r2 + 2.0 * x[1] * x[1]});
    };
    return make_objective(m, value, grad, hess, {Vec{0.7, -0.4}});
}

ObjectiveFn scalar_objective(const Manifold& m, std::function<double(double)> e,
                             std::function<double(double)> de,
                             std::function<double(double)> d2e, double probe) {
    return make_objective(
        m, [e](const Vec& x) { return e(x[0]); }, [de](const Vec& x) { return Vec{de(x[0])}; },
        [d2e](const Vec& x) { return SymMatrix(1, {d2e(x[0])}); }, {Vec{probe}});
}

}  // namespace

TEST_CASE("manifold geometry primitives", "[riemannian]") {
    REQUIRE_THROWS_AS(Manifold::sphere(1), std::invalid_argument);

    const Manifold s = Manifold::sphere(3);
    REQUIRE_THROWS_AS(s.validate_point({1.1, 0.0, 0.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(s.validate_point({1.0, 0.0}), std::invalid_argument);

    const Vec ex = {1.0, 0.0, 0.0};
    const Vec p = s.project_tangent(ex, {1.0, 1.0, 0.0});
    REQUIRE((p == Vec{0.0, 1.0, 0.0}));

    for (double th : {0.3, 1.5, 3.0}) {
        const Vec v = {0.0, th * std::cos(0.7), th * std::sin(0.7)};
        const Vec y = s.exp(ex, v);
        REQUIRE_THAT(vec_norm(y), WithinAbs(1.0, 1e-12));
        REQUIRE_THAT(s.dist(ex, y), WithinAbs(th, 1e-10));
        REQUIRE(vec_diff_norm(s.log(ex, y), v) <= 1e-8);
    }

    REQUIRE_THROWS_AS(s.exp(ex, {0.0, 3.141592653589793, 0.0}), std::domain_error);
    REQUIRE_THROWS_AS(s.log(ex, {-1.0, 0.0, 0.0}), std::domain_error);
}

TEST_CASE("make_objective cross-checks the gradient", "[riemannian]") {
    const Manifold m = Manifold::euclidean(1);
    REQUIRE_THROWS_AS(
        make_objective(
            m, [](const Vec& x) { return 0.5 * x[0] * x[0]; },
            [](const Vec& x) { return Vec{2.0 * x[0]}; }, {}, {Vec{0.7}}),
        std::invalid_argument);
    REQUIRE_NOTHROW(scalar_objective(m, [](double x) { return 0.5 * x * x; },
                                     [](double x) { return x; }, [](double) { return 1.0; },
                                     0.7));
}

TEST_CASE("forward Euler steps on plane and sphere", "[riemannian]") {
    const Manifold e2 = Manifold::euclidean(2);
    const ObjectiveFn q = make_objective(
        e2, [](const Vec& x) { return 0.5 * vec_dot(x, x); }, [](const Vec& x) { return x; },
        [](const Vec&) { return SymMatrix::identity(2); }, {Vec{1.0, 0.3}});
    const Vec step = forward_euler_step(e2, q, {1.0, 0.0}, 0.1);
    REQUIRE_THAT(step[0], WithinAbs(0.9, 1e-15));
    REQUIRE_THAT(step[1], WithinAbs(0.0, 1e-15));

    // constant objective: the point does not move
    const ObjectiveFn flat = make_objective(
        e2, [](const Vec&) { return 3.0; }, [](const Vec&) { return Vec{0.0, 0.0}; }, {},
        {Vec{0.4, -0.2}});
    REQUIRE((forward_euler_step(e2, flat, {0.4, -0.2}, 0.1) == Vec{0.4, -0.2}));

    // E = z from e_x: geodesic descent along the meridian
    const Manifold s = Manifold::sphere(3);
    const ObjectiveFn height = make_objective(
        s, [](const Vec& x) { return x[2]; }, [](const Vec&) { return Vec{0.0, 0.0, 1.0}; },
        [](const Vec&) { return SymMatrix::diagonal({0.0, 0.0, 0.0}); },
        {unit({0.6, -0.5, 0.3})});
    const double eta = 0.25;
    const Vec y = forward_euler_step(s, height, {1.0, 0.0, 0.0}, eta);
    REQUIRE_THAT(y[0], WithinAbs(std::cos(eta), 1e-12));
    REQUIRE_THAT(y[1], WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(y[2], WithinAbs(-std::sin(eta), 1e-12));
    REQUIRE_THAT(s.dist({1.0, 0.0, 0.0}, y), WithinAbs(eta, 1e-12));

    REQUIRE_THROWS_AS(forward_euler_step(e2, q, {1.0, 0.0}, 0.0), std::invalid_argument);
}

TEST_CASE("backward Euler solves the implicit step", "[riemannian]") {
    const Manifold m = Manifold::euclidean(1);
    const ObjectiveFn quad = scalar_objective(
        m, [](double x) { return 0.5 * x * x; }, [](double x) { return x; },
        [](double) { return 1.0; }, 0.7);
    REQUIRE_THAT(backward_euler_step(m, quad, {1.0}, 0.5)[0], WithinAbs(2.0 / 3.0, 1e-12));

    // y + eta y^3 = x, cross-checked by bisection
    const ObjectiveFn quart = scalar_objective(
        m, [](double x) { return 0.25 * x * x * x * x; }, [](double x) { return x * x * x; },
        [](double x) { return 3.0 * x * x; }, 0.7);
    const double eta = 0.1;
    const Vec y = backward_euler_step(m, quart, {1.0}, eta);
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid + eta * mid * mid * mid < 1.0)
            lo = mid;
        else
            hi = mid;
    }
    REQUIRE_THAT(y[0], WithinAbs(0.5 * (lo + hi), 1e-10));
    REQUIRE(std::abs(y[0] - 1.0 + eta * y[0] * y[0] * y[0]) <= 1e-10);

    // y(1 - eta) = x has no solution at eta = 1: the residual cannot move
    const ObjectiveFn concave = scalar_objective(
        m, [](double x) { return -0.5 * x * x; }, [](double x) { return -x; },
        [](double) { return -1.0; }, 0.7);
    REQUIRE_THROWS_AS(backward_euler_step(m, concave, {1.0}, 1.0), std::runtime_error);
}

TEST_CASE("modified objective: sign symmetry and gradient identity", "[riemannian]") {
    const Manifold s = Manifold::sphere(3);
    const Vec x = unit({0.3, 0.9, -0.2});
    const double eta = 0.2;

    const ObjectiveFn f = tilted_sphere_objective(s, true);
    const ObjectiveFn mf = modified_objective(s, f, eta, Scheme::forward);
    const ObjectiveFn mb = modified_objective(s, f, eta, Scheme::backward);
    REQUIRE_THAT(mf.value(x) + mb.value(x), WithinAbs(2.0 * f.value(x), 1e-13));
    REQUIRE_THAT(mf.value(x) - f.value(x),
                 WithinAbs(0.25 * eta * riem_grad_norm_sq(s, f, x), 1e-13));

    // grad E^eta - grad E = s (eta/2) Hess_g E [grad_g E]
    const Vec g = riem_grad(s, f, x);
    const Vec hg = riem_hessian_apply_fd(s, f, x, g);
    const Vec lhs_f = vec_axpy(riem_grad(s, mf, x), g, -1.0);
    REQUIRE(vec_diff_norm(lhs_f, vec_scaled(hg, 0.5 * eta)) <= 1e-6);

    // same identity through the finite-difference fallback
    const ObjectiveFn ffd = tilted_sphere_objective(s, false);
    const ObjectiveFn mbf = modified_objective(s, ffd, eta, Scheme::backward);
    const Vec lhs_b = vec_axpy(riem_grad(s, mbf, x), riem_grad(s, ffd, x), -1.0);
    REQUIRE(vec_diff_norm(lhs_b, vec_scaled(hg, -0.5 * eta)) <= 1e-4);
}

TEST_CASE("modified_flow matches the 1D closed form and stays on the sphere", "[riemannian]") {
    const Manifold m = Manifold::euclidean(1);
    const ObjectiveFn quad = scalar_objective(
        m, [](double x) { return 0.5 * x * x; }, [](double x) { return x; },
        [](double) { return 1.0; }, 0.7);
    // E^eta = (1 + eta/2) x^2/2, flow x(t) = e^{-(1+eta/2)t}
    const double eta = 0.3;
    const std::vector<Vec> traj = modified_flow(m, quad, {1.0}, eta, Scheme::forward, 1.0, 1000);
    REQUIRE(traj.size() == 1001);
    REQUIRE_THAT(traj.back()[0], WithinAbs(std::exp(-(1.0 + 0.5 * eta)), 1e-10));

    const Manifold s = Manifold::sphere(3);
    const ObjectiveFn f = tilted_sphere_objective(s, true);
    const std::vector<Vec> sphere_traj =
        modified_flow(s, f, unit({0.6, -0.5, 0.3}), 0.2, Scheme::forward, 2.0, 500);
    for (const Vec& p : sphere_traj) REQUIRE_THAT(vec_norm(p), WithinAbs(1.0, 1e-10));

    REQUIRE_THROWS_AS(modified_flow(m, quad, {1.0}, 0.1, Scheme::forward, 1.0, 0),
                      std::invalid_argument);
}

TEST_CASE("effective hessian of the modified energy", "[riemannian]") {
    const SymMatrix h = SymMatrix::diagonal({1.0, 2.0});
    const SymMatrix fwd = effective_hessian(h, 0.1, Scheme::forward);
    REQUIRE_THAT(fwd(0, 0), WithinAbs(1.2, 1e-13));
    REQUIRE_THAT(fwd(1, 1), WithinAbs(2.8, 1e-13));
    REQUIRE_THAT(fwd(0, 1), WithinAbs(0.0, 1e-13));
    const SymMatrix bwd = effective_hessian(h, 0.1, Scheme::backward);
    REQUIRE_THAT(bwd(0, 0), WithinAbs(0.8, 1e-13));
    REQUIRE_THAT(bwd(1, 1), WithinAbs(1.2, 1e-13));

    const SymMatrix g = effective_hessian(SymMatrix(2, {2.0, 1.0, 1.0, 2.0}), 0.1,
                                          Scheme::forward);
    REQUIRE_THAT(g(0, 0), WithinAbs(3.0, 1e-13));
    REQUIRE_THAT(g(0, 1), WithinAbs(1.8, 1e-13));
    REQUIRE_THAT(g(1, 1), WithinAbs(3.0, 1e-13));
}

TEST_CASE("discrete steps match the modified flow to second order", "[riemannian]") {
    const std::vector<double> etas = {0.125, 0.0625, 0.03125, 0.015625};

    const Manifold e2 = Manifold::euclidean(2);
    const ObjectiveFn fp = plane_objective(e2);
    const Manifold s3 = Manifold::sphere(3);
    const ObjectiveFn fs = tilted_sphere_objective(s3, true);

    const auto slopes = [&](const Manifold& m, const ObjectiveFn& f, const Vec& x0,
                            Scheme scheme) {
        const std::vector<OrderRow> rows = order_match_experiment(m, f, x0, etas, scheme);
        std::vector<std::pair<double, double>> pp, pm;
        for (const OrderRow& r : rows) {
            pp.emplace_back(r.eta, r.err_plain);
            pm.emplace_back(r.eta, r.err_modified);
        }
        return std::make_pair(fit_loglog(pp), fit_loglog(pm));
    };

    for (Scheme scheme : {Scheme::forward, Scheme::backward}) {
        const auto [plane_plain, plane_mod] = slopes(e2, fp, {1.2, -0.8}, scheme);
        REQUIRE(plane_plain.slope >= 0.8);
        REQUIRE(plane_plain.slope <= 1.3);
        REQUIRE(plane_mod.slope >= 1.8);
        const auto [sph_plain, sph_mod] = slopes(s3, fs, unit({0.6, -0.5, 0.3}), scheme);
        REQUIRE(sph_plain.slope >= 0.8);
        REQUIRE(sph_plain.slope <= 1.3);
        REQUIRE(sph_mod.slope >= 1.8);
    }

    REQUIRE(order_match_experiment(e2, fp, {1.2, -0.8}, {0.1}, Scheme::forward).size() == 1);
    REQUIRE_THROWS_AS(order_match_experiment(e2, fp, {1.2, -0.8}, {}, Scheme::forward),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(
        order_match_experiment(e2, fp, {1.2, -0.8}, {0.05, 0.1}, Scheme::forward),
        std::invalid_argument);
}
