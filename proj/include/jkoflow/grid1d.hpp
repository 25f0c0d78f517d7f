#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jkoflow/fd.hpp"

namespace jkoflow {

// Probability density on a uniform 1D grid, trapezoidal mass 1 within 1e-8.
class GridDensity1D {
public:
    GridDensity1D(double x_min, double x_max, std::vector<double> values,
                  bool renormalize = false)
        : x_min_(x_min), x_max_(x_max), v_(std::move(values)) {
        n_ = static_cast<int>(v_.size());
        if (!(x_max > x_min)) throw std::invalid_argument("GridDensity1D: x_max must be > x_min");
        if (n_ < 9) throw std::invalid_argument("GridDensity1D: need at least 9 nodes, got " +
                                                std::to_string(n_));
        h_ = (x_max_ - x_min_) / (n_ - 1);
        for (int i = 0; i < n_; ++i) {
            if (!(v_[i] >= 0.0) || !std::isfinite(v_[i]))
                throw std::invalid_argument("GridDensity1D: value at node " + std::to_string(i) +
                                            " is negative or non-finite");
        }
        const double m = trapz(v_, h_);
        if (renormalize) {
            if (!(m > 0.0)) throw std::invalid_argument("GridDensity1D: zero mass");
            for (double& x : v_) x /= m;
        } else if (std::abs(m - 1.0) > 1e-8) {
            throw std::invalid_argument("GridDensity1D: mass " + std::to_string(m) +
                                        " deviates from 1 beyond 1e-8");
        }
    }

    static GridDensity1D gaussian(double x_min, double x_max, int n, double mean, double sigma) {
        std::vector<double> v(n);
        const double h = (x_max - x_min) / (n - 1);
        const double c = 1.0 / (sigma * std::sqrt(2.0 * 3.141592653589793238462643383279502884));
        for (int i = 0; i < n; ++i) {
            const double x = x_min + i * h;
            const double z = (x - mean) / sigma;
            v[i] = c * std::exp(-0.5 * z * z);
        }
        return GridDensity1D(x_min, x_max, std::move(v), true);
    }

    int n() const { return n_; }
    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    double h() const { return h_; }
    double x(int i) const { return x_min_ + i * h_; }
    double value(int i) const { return v_[i]; }
    const std::vector<double>& values() const { return v_; }

    // Linear interpolation, 0 outside the grid.
    double interp(double x) const {
        if (x < x_min_ || x > x_max_) return 0.0;
        const double t = (x - x_min_) / h_;
        int i = static_cast<int>(t);
        if (i >= n_ - 1) i = n_ - 2;
        const double f = t - i;
        return v_[i] * (1.0 - f) + v_[i + 1] * f;
    }

private:
    double x_min_, x_max_, h_;
    int n_;
    std::vector<double> v_;
};

struct TransportMap1D {
    std::function<double(double)> map;
    std::function<double(double)> derivative;
};

// Spot-checks that `derivative` really differentiates `map`: centered
// differences at `samples` points, relative tolerance 1e-6.
inline void validate_transport_map(const TransportMap1D& t, double lo, double hi,
                                   int samples = 65) {
    for (int i = 0; i < samples; ++i) {
        const double x = lo + (hi - lo) * i / (samples - 1);
        const double step = 1e-5 * std::max(1.0, std::abs(x));
        const double fd = (t.map(x + step) - t.map(x - step)) / (2.0 * step);
        const double d = t.derivative(x);
        if (std::abs(fd - d) > 1e-6 * std::max(1.0, std::abs(d)))
            throw std::invalid_argument("TransportMap1D: derivative inconsistent at x = " +
                                        std::to_string(x) + " (analytic " + std::to_string(d) +
                                        ", centered " + std::to_string(fd) + ")");
    }
}

// One forward-Euler JKO transport map for the quartic potential started from
// a standard Gaussian: T(x) = x - h(x^3 - (3 eta/2) x^5). eta = 0 recovers
// the uncorrected map x - h x^3, which folds; the correction restores
// monotonicity once eta >= 3h/10.
inline TransportMap1D quartic_maps(double h, double eta) {
    if (!(h > 0.0)) throw std::invalid_argument("quartic_maps: h must be > 0");
    if (!(eta >= 0.0)) throw std::invalid_argument("quartic_maps: eta must be >= 0");
    TransportMap1D t;
    t.map = [h, eta](double x) {
        const double x2 = x * x;
        return x - h * (x * x2 - 1.5 * eta * x * x2 * x2);
    };
    t.derivative = [h, eta](double x) {
        const double x2 = x * x;
        return 1.0 - 3.0 * h * x2 + 7.5 * eta * h * x2 * x2;
    };
    return t;
}

// Images of the fold points of the quartic map (empty when monotone): the
// pushforward density is discontinuous exactly there.
inline std::vector<double> quartic_jump_centers(double h, double eta) {
    std::vector<double> centers;
    const TransportMap1D t = quartic_maps(h, eta);
    std::vector<double> us;
    if (eta == 0.0) {
        us.push_back(1.0 / (3.0 * h));
    } else {
        const double disc = 9.0 - 30.0 * eta / h;
        if (disc <= 0.0) return centers;
        us.push_back((3.0 - std::sqrt(disc)) / (15.0 * eta));
        us.push_back((3.0 + std::sqrt(disc)) / (15.0 * eta));
    }
    for (double u : us) {
        if (!(u > 0.0)) continue;
        const double xs = std::sqrt(u);
        centers.push_back(t.map(xs));
        centers.push_back(t.map(-xs));
    }
    return centers;
}

struct MonotoneReport {
    bool monotone;
    double min_derivative;
    double argmin;
};

// Dense scan of the derivative plus golden-section refinement around every
// local minimum. Verdict threshold -1e-12 absorbs round-off at the exact
// monotonicity boundary.
inline MonotoneReport is_monotone(const TransportMap1D& t, double lo, double hi, int samples) {
    if (samples < 1000) throw std::invalid_argument("is_monotone: need samples >= 1000");
    validate_transport_map(t, lo, hi);
    const double dx = (hi - lo) / (samples - 1);
    std::vector<double> d(samples);
    for (int i = 0; i < samples; ++i) d[i] = t.derivative(lo + i * dx);

    double best = d[0];
    double arg = lo;
    auto consider = [&](double x, double v) {
        if (v < best) {
            best = v;
            arg = x;
        }
    };
    consider(lo + (samples - 1) * dx, d[samples - 1]);

    const double gr = 0.6180339887498949;
    for (int i = 1; i + 1 < samples; ++i) {
        if (!(d[i] <= d[i - 1] && d[i] <= d[i + 1])) continue;
        double a = lo + (i - 1) * dx, b = lo + (i + 1) * dx;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        double f1 = t.derivative(x1), f2 = t.derivative(x2);
        while (b - a > 1e-10) {
            if (f1 < f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - gr * (b - a);
                f1 = t.derivative(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + gr * (b - a);
                f2 = t.derivative(x2);
            }
        }
        consider(x1, f1);
        consider(x2, f2);
        consider(lo + i * dx, d[i]);
    }
    return MonotoneReport{best > -1e-12, best, arg};
}

struct PushforwardResult {
    GridDensity1D density;  // renormalized to unit mass
    double raw_mass;        // trapezoidal mass before renormalization
};

// Density of T#rho0 by explicit preimage summation: for each output node y,
// bracket the sign changes of T(x) - y on a fine scan (16x the output
// resolution), bisect each bracket to 1e-12, and accumulate rho0/|T'| capped
// at 1e12 (the cap bounds the integrable singularity at fold points).
inline PushforwardResult pushforward(const GridDensity1D& rho0, const TransportMap1D& map,
                                     double out_x_min, double out_x_max, int out_n) {
    validate_transport_map(map, rho0.x_min(), rho0.x_max());
    const int n_scan = 16 * out_n;
    const double lo = rho0.x_min(), hi = rho0.x_max();
    const double ds = (hi - lo) / n_scan;
    std::vector<double> tx(n_scan + 1);
    for (int i = 0; i <= n_scan; ++i) tx[i] = map.map(lo + i * ds);

    constexpr double kCap = 1e12;
    std::vector<double> out(out_n, 0.0);
    const double oh = (out_x_max - out_x_min) / (out_n - 1);
    for (int j = 0; j < out_n; ++j) {
        const double y = out_x_min + j * oh;
        double acc = 0.0;
        for (int i = 0; i < n_scan; ++i) {
            const double fa = tx[i] - y, fb = tx[i + 1] - y;
            if (!(fa * fb < 0.0 || fa == 0.0)) continue;
            double a = lo + i * ds, b = a + ds;
            if (fa == 0.0) {
                b = a;
            } else {
                double va = fa;
                while (b - a > 1e-12) {
                    const double m = 0.5 * (a + b);
                    const double vm = map.map(m) - y;
                    if (vm == 0.0) {
                        a = b = m;
                        break;
                    }
                    if (va * vm < 0.0) {
                        b = m;
                    } else {
                        a = m;
                        va = vm;
                    }
                }
            }
            const double root = 0.5 * (a + b);
            const double dens = rho0.interp(root);
            const double slope = std::abs(map.derivative(root));
            acc += std::min(dens / std::max(slope, 1e-300), kCap);
        }
        out[j] = std::min(acc, kCap);
    }

    const double raw = trapz(out, oh);
    if (!(raw > 0.0)) throw std::runtime_error("pushforward: image has no mass on output grid");
    return PushforwardResult{GridDensity1D(out_x_min, out_x_max, std::move(out), true), raw};
}

// Adjacent-node ratio detector for density discontinuities, restricted to
// windows of +-`window` around the predicted locations.
inline bool jump_detector(const GridDensity1D& dens, const std::vector<double>& centers,
                          double window = 0.2, double ratio = 5.0) {
    for (int i = 0; i + 1 < dens.n(); ++i) {
        const double xm = 0.5 * (dens.x(i) + dens.x(i + 1));
        bool in_window = false;
        for (double c : centers)
            if (std::abs(xm - c) <= window) in_window = true;
        if (!in_window) continue;
        const double a = dens.value(i), b = dens.value(i + 1);
        const double r = std::max(a, b) / std::max(std::min(a, b), kDensityFloor);
        if (r > ratio) return true;
    }
    return false;
}

struct WgfResult {
    std::vector<double> times;
    std::vector<GridDensity1D> snapshots;
    double clipped_mass = 0.0;     // total negative mass removed, time-integrated
    double min_cfl_margin = 0.5;   // min over steps of 0.5 - max|v| dt/dx
    double max_mass_drift = 0.0;   // max per-step |mass - 1| before renormalization
};

// Conservative donor-cell (upwind) solver for the continuity equation
// d_t rho = -d_x(rho v), zero-flux boundaries. The velocity provider is
// called once per step on the current density. Positivity is enforced by
// clipping with renormalization; clipped mass is accounted in the result.
inline WgfResult wgf_solve(const GridDensity1D& rho0,
                           const std::function<std::vector<double>(const GridDensity1D&)>& velocity,
                           double t_end, int n_steps, int snapshot_stride = 0,
                           const std::function<void(int, double, const GridDensity1D&)>& observer =
                               {}) {
    if (!(t_end > 0.0)) throw std::invalid_argument("wgf_solve: t_end must be > 0");
    if (n_steps < 1) throw std::invalid_argument("wgf_solve: n_steps must be >= 1");
    const double dt = t_end / n_steps;
    const int n = rho0.n();
    const double h = rho0.h();

    WgfResult res;
    GridDensity1D rho = rho0;
    res.times.push_back(0.0);
    res.snapshots.push_back(rho);
    if (observer) observer(0, 0.0, rho);

    std::vector<double> flux(n - 1), next(n);
    for (int step = 0; step < n_steps; ++step) {
        const std::vector<double> v = velocity(rho);
        if (static_cast<int>(v.size()) != n)
            throw std::invalid_argument("wgf_solve: velocity field has " +
                                        std::to_string(v.size()) + " values, expected " +
                                        std::to_string(n));
        double vmax = 0.0;
        for (int i = 0; i + 1 < n; ++i) {
            const double vf = 0.5 * (v[i] + v[i + 1]);
            vmax = std::max(vmax, std::abs(vf));
            flux[i] = vf >= 0.0 ? vf * rho.value(i) : vf * rho.value(i + 1);
        }
        const double cfl = vmax * dt / h;
        res.min_cfl_margin = std::min(res.min_cfl_margin, 0.5 - cfl);
        if (cfl > 0.5) {
            const int suggested = static_cast<int>(std::ceil(n_steps * cfl / 0.5 * 1.05));
            throw std::runtime_error("wgf_solve: CFL number " + std::to_string(cfl) +
                                     " exceeds 0.5 at step " + std::to_string(step) +
                                     "; rerun with n_steps >= " + std::to_string(suggested));
        }

        for (int i = 0; i < n; ++i) {
            const double fin = i > 0 ? flux[i - 1] : 0.0;
            const double fout = i + 1 < n ? flux[i] : 0.0;
            next[i] = rho.value(i) - dt / h * (fout - fin);
        }
        double clipped = 0.0;
        for (int i = 0; i < n; ++i) {
            if (next[i] < 0.0) {
                clipped -= next[i];
                next[i] = 0.0;
            }
        }
        res.clipped_mass += clipped * h;
        const double mass = trapz(next, h);
        res.max_mass_drift = std::max(res.max_mass_drift, std::abs(mass - 1.0));
        rho = GridDensity1D(rho.x_min(), rho.x_max(), next, true);

        const double t = (step + 1) * dt;
        if (observer) observer(step + 1, t, rho);
        const bool record = snapshot_stride > 0 && (step + 1) % snapshot_stride == 0;
        if (record || step + 1 == n_steps) {
            if (res.times.back() != t) {
                res.times.push_back(t);
                res.snapshots.push_back(rho);
            }
        }
    }
    return res;
}

// Trapezoidal KL divergence against a normalized target log-density given on
// the same grid. Vacuum nodes (rho below floor) contribute zero.
inline double kl_to_target(const GridDensity1D& rho, const std::vector<double>& log_pi) {
    if (static_cast<int>(log_pi.size()) != rho.n())
        throw std::invalid_argument("kl_to_target: grid size mismatch");
    std::vector<double> integrand(rho.n(), 0.0);
    for (int i = 0; i < rho.n(); ++i) {
        const double r = rho.value(i);
        if (r >= kDensityFloor) integrand[i] = r * (std::log(r) - log_pi[i]);
    }
    return trapz(integrand, rho.h());
}

// Normalized log-density of exp(neg_energy_log) on rho's grid: subtracts the
// trapezoidal log-partition so kl_to_target sees a unit-mass target.
inline std::vector<double> normalized_log_density(const GridDensity1D& grid_like,
                                                  const std::function<double(double)>& log_unnorm) {
    const int n = grid_like.n();
    std::vector<double> lp(n);
    double lmax = -1e308;
    for (int i = 0; i < n; ++i) {
        lp[i] = log_unnorm(grid_like.x(i));
        lmax = std::max(lmax, lp[i]);
    }
    std::vector<double> w(n);
    for (int i = 0; i < n; ++i) w[i] = std::exp(lp[i] - lmax);
    const double z = std::log(trapz(w, grid_like.h())) + lmax;
    for (int i = 0; i < n; ++i) lp[i] -= z;
    return lp;
}

}  // namespace jkoflow
