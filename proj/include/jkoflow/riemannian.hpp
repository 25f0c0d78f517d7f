#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jkoflow/matcore.hpp"

namespace jkoflow {

// Finite-dimensional implicit-bias laboratory: Euclidean space and the unit
// sphere, explicit/proximal gradient descent, and the modified objectives
// E +- (eta/4)|grad E|^2 (+ for the forward scheme, - for backward).

using Vec = std::vector<double>;

inline Vec vec_axpy(const Vec& x, const Vec& y, double c) {
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] + c * y[i];
    return r;
}

inline Vec vec_scaled(const Vec& x, double c) {
    Vec r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r[i] = c * x[i];
    return r;
}

class Manifold {
public:
    enum class Kind { euclidean, sphere };

    static Manifold euclidean(int dim) { return Manifold(Kind::euclidean, dim); }
    static Manifold sphere(int ambient_dim) {
        if (ambient_dim < 2) throw std::invalid_argument("Manifold::sphere: ambient dim >= 2");
        return Manifold(Kind::sphere, ambient_dim);
    }

    Kind kind() const { return kind_; }
    int ambient_dim() const { return dim_; }

    void validate_point(const Vec& x) const {
        if (static_cast<int>(x.size()) != dim_)
            throw std::invalid_argument("Manifold: point dimension mismatch");
        if (kind_ == Kind::sphere && std::abs(vec_norm(x) - 1.0) > 1e-10)
            throw std::invalid_argument("Manifold: sphere point norm deviates by " +
                                        std::to_string(vec_norm(x) - 1.0));
    }

    Vec project_tangent(const Vec& x, const Vec& u) const {
        if (kind_ == Kind::euclidean) return u;
        return vec_axpy(u, x, -vec_dot(u, x));
    }

    // Geodesic from x with initial velocity v, evaluated at time 1. For the
    // sphere this is the raw great-circle formula; callers wanting exact unit
    // norm after long products of steps renormalize themselves.
    Vec exp(const Vec& x, const Vec& v) const {
        if (kind_ == Kind::euclidean) return vec_axpy(x, v, 1.0);
        const double th = vec_norm(v);
        if (!(th < 3.141592653589793))
            throw std::domain_error("Manifold::exp: step of length " + std::to_string(th) +
                                    " leaves the injectivity radius");
        if (th < 1e-14) return vec_axpy(x, v, 1.0);
        Vec r(v.size());
        const double c = std::cos(th), s = std::sin(th) / th;
        for (std::size_t i = 0; i < r.size(); ++i) r[i] = c * x[i] + s * v[i];
        return r;
    }

    Vec log(const Vec& x, const Vec& y) const {
        if (kind_ == Kind::euclidean) return vec_axpy(y, x, -1.0);
        double c = vec_dot(x, y);
        c = std::min(1.0, std::max(-1.0, c));
        if (c <= -1.0 + 1e-12)
            throw std::domain_error("Manifold::log: points are antipodal");
        const Vec u = vec_axpy(y, x, -c);  // y - <x,y> x, length sin(theta)
        const double un = vec_norm(u);
        if (un < 1e-14) return Vec(x.size(), 0.0);
        return vec_scaled(u, std::acos(c) / un);
    }

    double dist(const Vec& x, const Vec& y) const {
        if (kind_ == Kind::euclidean) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
            return std::sqrt(s);
        }
        double c = vec_dot(x, y) / (vec_norm(x) * vec_norm(y));
        c = std::min(1.0, std::max(-1.0, c));
        return std::acos(c);
    }

    Vec to_manifold(const Vec& x) const {
        if (kind_ == Kind::euclidean) return x;
        return vec_scaled(x, 1.0 / vec_norm(x));
    }

private:
    Manifold(Kind k, int d) : kind_(k), dim_(d) {}
    Kind kind_;
    int dim_;
};

struct ObjectiveFn {
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> ambient_gradient;
    std::function<SymMatrix(const Vec&)> ambient_hessian;  // may be empty
    bool has_hessian = false;
};

// Riemannian gradient: tangential projection at the normalized point, so the
// field extends smoothly to a neighborhood of the sphere.
inline Vec riem_grad(const Manifold& m, const ObjectiveFn& f, const Vec& x) {
    const Vec p = m.to_manifold(x);
    return m.project_tangent(p, f.ambient_gradient(p));
}

inline double riem_grad_norm_sq(const Manifold& m, const ObjectiveFn& f, const Vec& x) {
    const Vec g = riem_grad(m, f, x);
    return vec_dot(g, g);
}

// Validates the analytic gradient against central differences of the value
// at the probe points (tangentially projected, relative tolerance 1e-5).
inline ObjectiveFn make_objective(const Manifold& m, std::function<double(const Vec&)> value,
                                  std::function<Vec(const Vec&)> gradient,
                                  std::function<SymMatrix(const Vec&)> hessian,
                                  const std::vector<Vec>& probes) {
    ObjectiveFn f;
    f.value = std::move(value);
    f.ambient_gradient = std::move(gradient);
    f.has_hessian = static_cast<bool>(hessian);
    f.ambient_hessian = std::move(hessian);
    for (const Vec& p : probes) {
        m.validate_point(p);
        Vec fd(p.size());
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double step = 1e-5 * std::max(1.0, std::abs(p[k]));
            Vec hi = p, lo = p;
            hi[k] += step;
            lo[k] -= step;
            fd[k] = (f.value(hi) - f.value(lo)) / (2.0 * step);
        }
        const Vec ga = m.project_tangent(p, f.ambient_gradient(p));
        const Vec gf = m.project_tangent(p, fd);
        const Vec diff = vec_axpy(ga, gf, -1.0);
        if (vec_norm(diff) > 1e-5 * std::max(1.0, vec_norm(ga)))
            throw std::invalid_argument(
                "make_objective: gradient disagrees with central differences by " +
                std::to_string(vec_norm(diff)));
    }
    return f;
}

inline Vec forward_euler_step(const Manifold& m, const ObjectiveFn& f, const Vec& x, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("forward_euler_step: eta must be > 0");
    m.validate_point(x);
    return m.exp(x, vec_scaled(riem_grad(m, f, x), -eta));
}

// Proximal step argmin E(y) + d(x,y)^2/(2 eta), solved by damped fixed-point
// iteration on the stationarity condition log_y(x) = eta grad E(y). Step
// acceptance backtracks on the residual norm itself: an objective-decrease
// test cannot resolve the O(res^2/eta) guaranteed decrease once the residual
// is small relative to machine precision of the objective. Terminates at
// residual 1e-12.
inline Vec backward_euler_step(const Manifold& m, const ObjectiveFn& f, const Vec& x, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("backward_euler_step: eta must be > 0");
    m.validate_point(x);
    auto residual = [&](const Vec& y) {
        return vec_axpy(m.log(y, x), riem_grad(m, f, y), -eta);
    };
    Vec y = x;
    Vec r = residual(y);
    double res = vec_norm(r);
    for (int iter = 0; iter < 1000; ++iter) {
        if (res <= 1e-12) return y;
        double alpha = 1.0;
        bool accepted = false;
        while (alpha >= 1e-8) {
            const Vec cand = m.to_manifold(m.exp(y, vec_scaled(r, alpha)));
            const Vec cand_r = residual(cand);
            const double cand_res = vec_norm(cand_r);
            if (cand_res <= (1.0 - 1e-4 * alpha) * res) {
                y = cand;
                r = cand_r;
                res = cand_res;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw std::runtime_error("backward_euler_step: line search stalled, residual " +
                                     std::to_string(res));
    }
    throw std::runtime_error("backward_euler_step: no convergence after 1000 iterations, residual " +
                             std::to_string(res));
}

enum class Scheme { forward, backward };

// E^eta = E + s (eta/4)|grad_g E|^2 with s = +1 (forward) / -1 (backward).
// With an analytic ambient Hessian the gradient uses the exact identity
// grad E^eta = grad E + s (eta/2) Hess_g E[grad_g E] (on the sphere the
// Hessian of the restriction is P H P - <x, grad E> P); without one it falls
// back to central differences of the squared-gradient-norm field (step 1e-5),
// which relaxes the gradient-identity accuracy from 1e-6 to 1e-4.
inline ObjectiveFn modified_objective(const Manifold& m, const ObjectiveFn& f, double eta,
                                      Scheme scheme) {
    if (!(eta >= 0.0)) throw std::invalid_argument("modified_objective: eta must be >= 0");
    const double sign = scheme == Scheme::forward ? 1.0 : -1.0;
    ObjectiveFn out;
    out.value = [m, f, eta, sign](const Vec& y) {
        return f.value(y) + sign * 0.25 * eta * riem_grad_norm_sq(m, f, y);
    };
    if (f.has_hessian) {
        out.ambient_gradient = [m, f, eta, sign](const Vec& y) {
            const Vec p = m.to_manifold(y);
            const Vec g = m.project_tangent(p, f.ambient_gradient(p));
            Vec hg = sym_apply(f.ambient_hessian(p), g);
            if (m.kind() == Manifold::Kind::sphere) {
                hg = m.project_tangent(p, hg);
                const double normal = vec_dot(p, f.ambient_gradient(p));
                hg = vec_axpy(hg, g, -normal);
            }
            return vec_axpy(f.ambient_gradient(y), hg, sign * 0.5 * eta);
        };
    } else {
        out.ambient_gradient = [m, f, eta, sign](const Vec& y) {
            Vec fd(y.size());
            for (std::size_t k = 0; k < y.size(); ++k) {
                Vec hi = y, lo = y;
                hi[k] += 1e-5;
                lo[k] -= 1e-5;
                fd[k] = (riem_grad_norm_sq(m, f, hi) - riem_grad_norm_sq(m, f, lo)) / 2e-5;
            }
            const Vec p = m.to_manifold(y);
            return vec_axpy(f.ambient_gradient(y), m.project_tangent(p, fd), sign * 0.25 * eta);
        };
    }
    out.has_hessian = false;
    return out;
}

// Hess_g E[u] by central differences of the Riemannian gradient field along
// u; the sphere Weingarten term enters through the projection in riem_grad.
inline Vec riem_hessian_apply_fd(const Manifold& m, const ObjectiveFn& f, const Vec& x,
                                 const Vec& u) {
    const double un = vec_norm(u);
    if (un == 0.0) return Vec(x.size(), 0.0);
    const double step = 1e-6 / un;
    const Vec gp = riem_grad(m, f, vec_axpy(x, u, step));
    const Vec gm = riem_grad(m, f, vec_axpy(x, u, -step));
    return m.project_tangent(m.to_manifold(x), vec_scaled(vec_axpy(gp, gm, -1.0), 0.5 / step));
}

// Trajectory of the gradient flow on E^eta (eta = 0: the plain flow). RK4
// with stages evaluated through the smooth ambient extension; on the sphere
// the per-step increment is tangentially projected and pushed through the
// exponential map.
inline std::vector<Vec> modified_flow(const Manifold& m, const ObjectiveFn& f, const Vec& x0,
                                      double eta, Scheme scheme, double t_end, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("modified_flow: n_steps must be >= 1");
    if (!(t_end >= 0.0)) throw std::invalid_argument("modified_flow: t_end must be >= 0");
    m.validate_point(x0);
    const ObjectiveFn fe = modified_objective(m, f, eta, scheme);
    auto field = [&](const Vec& y) {
        const Vec p = m.to_manifold(y);
        return vec_scaled(m.project_tangent(p, fe.ambient_gradient(p)), -1.0);
    };

    const double dt = t_end / n_steps;
    std::vector<Vec> traj;
    traj.reserve(n_steps + 1);
    traj.push_back(x0);
    Vec x = x0;
    for (int step = 0; step < n_steps; ++step) {
        const Vec k1 = field(x);
        const Vec k2 = field(vec_axpy(x, k1, dt / 2.0));
        const Vec k3 = field(vec_axpy(x, k2, dt / 2.0));
        const Vec k4 = field(vec_axpy(x, k3, dt));
        Vec incr(x.size());
        for (std::size_t i = 0; i < x.size(); ++i)
            incr[i] = dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (m.kind() == Manifold::Kind::sphere) {
            x = m.to_manifold(m.exp(x, m.project_tangent(x, incr)));
        } else {
            x = vec_axpy(x, incr, 1.0);
        }
        traj.push_back(x);
    }
    return traj;
}

struct OrderRow {
    double eta;
    double err_plain;
    double err_modified;
};

// For each eta: k = T/eta discrete steps (forward or backward), compared at
// every checkpoint t = j eta against the plain flow and the modified flow,
// both integrated with `substeps` RK4 stages per discrete step. Errors are
// sup over checkpoints of the geodesic distance.
inline std::vector<OrderRow> order_match_experiment(const Manifold& m, const ObjectiveFn& f,
                                                    const Vec& x0, const std::vector<double>& etas,
                                                    Scheme scheme, double horizon = 1.0,
                                                    int substeps = 20) {
    if (etas.empty()) throw std::invalid_argument("order_match_experiment: empty eta list");
    for (std::size_t i = 1; i < etas.size(); ++i)
        if (!(etas[i] < etas[i - 1]))
            throw std::invalid_argument("order_match_experiment: etas must be descending");
    std::vector<OrderRow> rows;
    rows.reserve(etas.size());
    for (double eta : etas) {
        if (!(eta > 0.0)) throw std::invalid_argument("order_match_experiment: eta must be > 0");
        const int k = static_cast<int>(std::ceil(horizon / eta - 1e-12));
        const std::vector<Vec> plain =
            modified_flow(m, f, x0, 0.0, scheme, k * eta, k * substeps);
        const std::vector<Vec> modified =
            modified_flow(m, f, x0, eta, scheme, k * eta, k * substeps);
        Vec x = x0;
        double ep = 0.0, em = 0.0;
        for (int j = 1; j <= k; ++j) {
            x = scheme == Scheme::forward ? forward_euler_step(m, f, x, eta)
                                          : backward_euler_step(m, f, x, eta);
            if (m.kind() == Manifold::Kind::sphere) x = m.to_manifold(x);
            ep = std::max(ep, m.dist(x, plain[static_cast<std::size_t>(j) * substeps]));
            em = std::max(em, m.dist(x, modified[static_cast<std::size_t>(j) * substeps]));
        }
        rows.push_back(OrderRow{eta, ep, em});
    }
    return rows;
}

// (I + s 2 eta H) H, the curvature of the modified energy normal to a minima
// manifold: the forward scheme sharpens it, the backward scheme flattens it.
inline SymMatrix effective_hessian(const SymMatrix& h, double eta, Scheme scheme) {
    const double sign = scheme == Scheme::forward ? 1.0 : -1.0;
    const SymMatrix h2 = SymMatrix::from_symmetric_part(mat_mul(h.to_mat(), h.to_mat()));
    return sym_add(h, h2, sign * 2.0 * eta);
}

}  // namespace jkoflow
