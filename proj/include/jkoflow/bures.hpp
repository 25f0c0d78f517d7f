#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "jkoflow/matcore.hpp"
#include "jkoflow/rng.hpp"

namespace jkoflow {

// Gaussian flows under a linear drift: the exactly solvable corner of the
// library. The drift is restricted to symmetric negative-definite A so the
// dynamics are a Wasserstein gradient flow of the free energy with potential
// -x'Ax/2 (general drifts are out of scope).

struct GaussianState {
    std::vector<double> mean;
    SymMatrix cov;
};

inline void validate_state(const GaussianState& s) {
    if (static_cast<int>(s.mean.size()) != s.cov.dim())
        throw std::invalid_argument("GaussianState: mean length " +
                                    std::to_string(s.mean.size()) + " vs cov dim " +
                                    std::to_string(s.cov.dim()));
    const double lam = min_eigenvalue(s.cov);
    if (!(lam > kSpdThreshold))
        throw std::domain_error("GaussianState: covariance eigenvalue " + std::to_string(lam) +
                                " not above SPD threshold 1e-12");
}

struct LinearFokkerPlanck {
    SymMatrix drift;  // A, symmetric negative definite
    double beta;      // inverse temperature

    LinearFokkerPlanck(SymMatrix a, double beta_) : drift(std::move(a)), beta(beta_) {
        if (!(beta > 0.0)) throw std::invalid_argument("LinearFokkerPlanck: beta must be > 0");
        const double lam_max = sym_eigen(drift).eigenvalues.back();
        if (!(lam_max < -1e-12))
            throw std::invalid_argument("LinearFokkerPlanck: drift eigenvalue " +
                                        std::to_string(lam_max) + " not below -1e-12");
    }
};

inline double bures_w2(const GaussianState& a, const GaussianState& b) {
    validate_state(a);
    validate_state(b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.mean.size(); ++i) {
        const double d = a.mean[i] - b.mean[i];
        d2 += d * d;
    }
    const SymMatrix ra = spd_sqrt(a.cov);
    const SymMatrix inner = spd_sqrt(sym_sandwich(ra, b.cov));
    d2 += a.cov.trace() + b.cov.trace() - 2.0 * inner.trace();
    return std::sqrt(std::max(0.0, d2));
}

struct BwRhs {
    std::vector<double> dmean;
    SymMatrix dcov;
};

// Vanilla flow: mean follows the drift, covariance the Lyapunov equation.
inline BwRhs lyapunov_rhs(const GaussianState& s, const LinearFokkerPlanck& sys) {
    BwRhs r;
    r.dmean = sym_apply(sys.drift, s.mean);
    const SymMatrix ac = sym_anticommutator(sys.drift, s.cov);
    r.dcov = sym_add(ac, SymMatrix::identity(s.cov.dim()), 2.0 / sys.beta);
    return r;
}

// The eta-independent second-order correction field. The corrected flow is
// exactly lyapunov_rhs + eta * this, so exposing it separately keeps the
// linear-in-eta structure visible (and testable bit-for-bit).
//
// Note the covariance term carries a full beta^-2 Sigma^-1, not half of it:
// with this coefficient the corrected flow leaves the Gibbs equilibrium
// Sigma = (beta(-A))^-1 stationary, as any flow of the modified energy must
// (the slope penalty is minimized at the equilibrium), and the Richardson
// extraction of the JKO step's eta^2 coefficient reproduces it exactly.
inline BwRhs jko_bias_rhs(const GaussianState& s, const LinearFokkerPlanck& sys) {
    const SymMatrix a2 =
        SymMatrix::from_symmetric_part(mat_mul(sys.drift.to_mat(), sys.drift.to_mat()));
    BwRhs r;
    r.dmean = sym_apply(a2, s.mean);
    for (double& v : r.dmean) v *= 0.5;
    const SymMatrix ac = sym_scale(sym_anticommutator(a2, s.cov), 0.5);
    r.dcov = sym_add(ac, spd_inverse(s.cov), -1.0 / (sys.beta * sys.beta));
    return r;
}

inline BwRhs corrected_rhs(const GaussianState& s, const LinearFokkerPlanck& sys, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("corrected_rhs: eta must be >= 0");
    const BwRhs lyap = lyapunov_rhs(s, sys);
    const BwRhs bias = jko_bias_rhs(s, sys);
    BwRhs r;
    r.dmean.resize(lyap.dmean.size());
    for (std::size_t i = 0; i < r.dmean.size(); ++i)
        r.dmean[i] = lyap.dmean[i] + eta * bias.dmean[i];
    r.dcov = sym_add(lyap.dcov, bias.dcov, eta);
    return r;
}

// One analytic JKO step. The mean update is a resolvent; the covariance
// update solves the fixed-point relation
//   (S^-1 Sigma1^-1 S^-1)^(1/2) = (beta/2eta)(-I + (I + (4eta/beta) S^-1 (I - eta A) S^-1)^(1/2))
// with S = Sigma^(1/2), via Z -> V = S Z S -> Sigma1 = V^-1 Sigma V^-1.
// The algebraic route is validated by back-substitution: the rebuilt
// left-hand side must match Z to 1e-8 in Frobenius norm.
inline double jko_backsub_residual(const GaussianState& prev, const GaussianState& next,
                                   const LinearFokkerPlanck& sys, double eta) {
    const int d = prev.cov.dim();
    const SymMatrix s = spd_sqrt(prev.cov);
    const SymMatrix si = spd_inverse(s);
    const SymMatrix m = sym_add(SymMatrix::identity(d), sys.drift, -eta);
    const SymMatrix g = sym_add(SymMatrix::identity(d), sym_sandwich(si, m), 4.0 * eta / sys.beta);
    const SymMatrix z =
        sym_scale(sym_add(spd_sqrt(g), SymMatrix::identity(d), -1.0), sys.beta / (2.0 * eta));
    const SymMatrix lhs = spd_sqrt(sym_sandwich(si, spd_inverse(next.cov)));
    return sym_add(lhs, z, -1.0).frobenius();
}

inline GaussianState jko_analytic_step(const GaussianState& s, const LinearFokkerPlanck& sys,
                                       double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("jko_analytic_step: eta must be > 0");
    validate_state(s);
    const int d = s.cov.dim();
    try {
        const SymMatrix m = sym_add(SymMatrix::identity(d), sys.drift, -eta);  // I - eta A
        GaussianState out;
        out.mean = sym_apply(spd_inverse(m), s.mean);

        const SymMatrix sq = spd_sqrt(s.cov);
        const SymMatrix si = spd_inverse(sq);
        const SymMatrix g =
            sym_add(SymMatrix::identity(d), sym_sandwich(si, m), 4.0 * eta / sys.beta);
        const SymMatrix z =
            sym_scale(sym_add(spd_sqrt(g), SymMatrix::identity(d), -1.0), sys.beta / (2.0 * eta));
        const SymMatrix v = sym_sandwich(sq, z);
        out.cov = sym_sandwich(spd_inverse(v), s.cov);

        validate_state(out);
        const double res = jko_backsub_residual(s, out, sys, eta);
        if (!(res <= 1e-8))
            throw std::runtime_error("jko_analytic_step: back-substitution residual " +
                                     std::to_string(res) + " exceeds 1e-8");
        return out;
    } catch (const std::domain_error& e) {
        throw std::domain_error("jko_analytic_step (eta=" + std::to_string(eta) +
                                "): " + e.what());
    }
}

enum class BwFlowKind { vanilla, corrected };

// Classical RK4 on the coupled (mean, cov) ODE. Covariance stays in
// SymMatrix arithmetic, so every stage is symmetric by construction; SPD is
// re-checked after each step and failures name the step index.
inline GaussianState rk4_integrate(const GaussianState& s0, const LinearFokkerPlanck& sys,
                                   BwFlowKind kind, double eta, double t_end, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("rk4_integrate: n_steps must be >= 1");
    if (!(t_end >= 0.0)) throw std::invalid_argument("rk4_integrate: t_end must be >= 0");
    validate_state(s0);
    if (t_end == 0.0) return s0;

    auto rhs = [&](const GaussianState& s) {
        return kind == BwFlowKind::vanilla ? lyapunov_rhs(s, sys) : corrected_rhs(s, sys, eta);
    };
    auto advance = [](const GaussianState& s, const BwRhs& k, double c) {
        GaussianState t;
        t.mean.resize(s.mean.size());
        for (std::size_t i = 0; i < s.mean.size(); ++i) t.mean[i] = s.mean[i] + c * k.dmean[i];
        t.cov = sym_add(s.cov, k.dcov, c);
        return t;
    };

    const double dt = t_end / n_steps;
    GaussianState s = s0;
    for (int step = 0; step < n_steps; ++step) {
        const BwRhs k1 = rhs(s);
        const BwRhs k2 = rhs(advance(s, k1, dt / 2.0));
        const BwRhs k3 = rhs(advance(s, k2, dt / 2.0));
        const BwRhs k4 = rhs(advance(s, k3, dt));
        GaussianState nxt;
        nxt.mean.resize(s.mean.size());
        for (std::size_t i = 0; i < s.mean.size(); ++i)
            nxt.mean[i] =
                s.mean[i] + dt / 6.0 * (k1.dmean[i] + 2.0 * k2.dmean[i] + 2.0 * k3.dmean[i] +
                                        k4.dmean[i]);
        SymMatrix dc = sym_add(k1.dcov, k2.dcov, 2.0);
        dc = sym_add(dc, k3.dcov, 2.0);
        dc = sym_add(dc, k4.dcov, 1.0);
        nxt.cov = sym_add(s.cov, dc, dt / 6.0);
        const double lam = min_eigenvalue(nxt.cov);
        if (!(lam > kSpdThreshold))
            throw std::domain_error("rk4_integrate: covariance lost SPD at step " +
                                    std::to_string(step) + " (eigenvalue " + std::to_string(lam) +
                                    ")");
        s = std::move(nxt);
    }
    return s;
}

struct BwInstance {
    LinearFokkerPlanck sys;
    GaussianState s0;
};

// Seeded instance of the standard protocol: A = Q diag(spectrum) Q' with Q
// from modified Gram-Schmidt QR of a Gaussian matrix, P0 = MM' + 0.5 I,
// mu0 standard normal, beta = 1. Draw order (row-major matrices first, then
// the mean) is part of the reproducibility contract.
inline Mat gaussian_matrix(Rng& rng, int d) {
    Mat m(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
    return m;
}

inline Mat mgs_q_factor(const Mat& m) {
    const int d = m.n;
    Mat q(d);
    for (int j = 0; j < d; ++j) {
        std::vector<double> v(d);
        for (int i = 0; i < d; ++i) v[i] = m(i, j);
        for (int k = 0; k < j; ++k) {
            double proj = 0.0;
            for (int i = 0; i < d; ++i) proj += q(i, k) * v[i];
            for (int i = 0; i < d; ++i) v[i] -= proj * q(i, k);
        }
        const double nrm = vec_norm(v);
        if (!(nrm > 1e-10)) throw std::runtime_error("mgs_q_factor: rank-deficient draw");
        for (int i = 0; i < d; ++i) q(i, j) = v[i] / nrm;
    }
    return q;
}

inline BwInstance make_bw_instance(std::uint64_t seed,
                                   std::vector<double> spectrum = {-0.2, -0.6, -1.2}) {
    const int d = static_cast<int>(spectrum.size());
    Rng rng(seed);
    const Mat q = mgs_q_factor(gaussian_matrix(rng, d));
    Mat scaled(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) scaled(i, j) = q(i, j) * spectrum[j];
    const SymMatrix a = SymMatrix::from_symmetric_part(mat_mul(scaled, mat_transpose(q)));

    const Mat m2 = gaussian_matrix(rng, d);
    Mat p0m = mat_mul(m2, mat_transpose(m2));
    for (int i = 0; i < d; ++i) p0m(i, i) += 0.5;
    const SymMatrix p0 = SymMatrix::from_symmetric_part(p0m);

    GaussianState s0;
    s0.mean = rng.normals(d);
    s0.cov = p0;
    return BwInstance{LinearFokkerPlanck(a, 1.0), std::move(s0)};
}

struct ScalingRow {
    double eta;
    double w2_vanilla, w2_modified;
    double mean_err_vanilla, mean_err_modified;
    double cov_err_vanilla, cov_err_modified;
};

inline void check_etas_descending(const std::vector<double>& etas, const char* who) {
    if (etas.empty()) throw std::invalid_argument(std::string(who) + ": empty eta list");
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0)) throw std::invalid_argument(std::string(who) + ": eta must be > 0");
        if (i > 0 && !(etas[i] < etas[i - 1]))
            throw std::invalid_argument(std::string(who) + ": etas must be strictly descending");
    }
}

inline ScalingRow bw_compare_states(double eta, const GaussianState& jko,
                                    const GaussianState& vanilla, const GaussianState& corrected) {
    ScalingRow row;
    row.eta = eta;
    row.w2_vanilla = bures_w2(vanilla, jko);
    row.w2_modified = bures_w2(corrected, jko);
    double mv = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < jko.mean.size(); ++i) {
        mv += (vanilla.mean[i] - jko.mean[i]) * (vanilla.mean[i] - jko.mean[i]);
        mm += (corrected.mean[i] - jko.mean[i]) * (corrected.mean[i] - jko.mean[i]);
    }
    row.mean_err_vanilla = std::sqrt(mv);
    row.mean_err_modified = std::sqrt(mm);
    row.cov_err_vanilla = sym_add(vanilla.cov, jko.cov, -1.0).frobenius();
    row.cov_err_modified = sym_add(corrected.cov, jko.cov, -1.0).frobenius();
    return row;
}

// One-step consistency protocol: both flows integrated to t = eta, compared
// against a single analytic JKO step. Measures the local truncation order
// (slopes ~2 vanilla, ~3 modified).
inline std::vector<ScalingRow> bw_error_scaling(const LinearFokkerPlanck& sys,
                                                const GaussianState& s0,
                                                const std::vector<double>& etas,
                                                int steps_per_eta = 200) {
    check_etas_descending(etas, "bw_error_scaling");
    std::vector<ScalingRow> rows;
    rows.reserve(etas.size());
    for (double eta : etas) {
        const GaussianState jko = jko_analytic_step(s0, sys, eta);
        const GaussianState vanilla =
            rk4_integrate(s0, sys, BwFlowKind::vanilla, 0.0, eta, steps_per_eta);
        const GaussianState corrected =
            rk4_integrate(s0, sys, BwFlowKind::corrected, eta, eta, steps_per_eta);
        rows.push_back(bw_compare_states(eta, jko, vanilla, corrected));
    }
    return rows;
}

// Fixed-horizon protocol: T/eta JKO steps vs both flows integrated to T.
// Measures the global order (slopes ~1 vanilla, ~2 modified).
inline std::vector<ScalingRow> bw_fixed_horizon_scaling(const LinearFokkerPlanck& sys,
                                                        const GaussianState& s0,
                                                        const std::vector<double>& etas,
                                                        double horizon = 1.0,
                                                        int flow_steps = 200) {
    check_etas_descending(etas, "bw_fixed_horizon_scaling");
    if (!(horizon > 0.0))
        throw std::invalid_argument("bw_fixed_horizon_scaling: horizon must be > 0");
    std::vector<ScalingRow> rows;
    rows.reserve(etas.size());
    for (double eta : etas) {
        const double kf = horizon / eta;
        const int k = static_cast<int>(std::llround(kf));
        if (k < 1 || std::abs(kf - k) > 1e-9 * std::max(1.0, kf))
            throw std::invalid_argument(
                "bw_fixed_horizon_scaling: horizon must be an integer multiple of eta " +
                std::to_string(eta));
        GaussianState jko = s0;
        for (int i = 0; i < k; ++i) jko = jko_analytic_step(jko, sys, eta);
        const GaussianState vanilla =
            rk4_integrate(s0, sys, BwFlowKind::vanilla, 0.0, horizon, flow_steps);
        const GaussianState corrected =
            rk4_integrate(s0, sys, BwFlowKind::corrected, eta, horizon, flow_steps);
        rows.push_back(bw_compare_states(eta, jko, vanilla, corrected));
    }
    return rows;
}

struct RichardsonCheck {
    double cov_rel_err;
    double mean_rel_err;
};

// Extracts the eta^2 coefficient of the analytic JKO step by Richardson
// extrapolation and compares it with jko_bias_rhs at the initial state. The
// eta ladder {1e-2, 5e-3, 2.5e-3} balances truncation against round-off: the
// divided differences lose ~eta^-2 digits to cancellation.
inline RichardsonCheck richardson_bias_check(const LinearFokkerPlanck& sys,
                                             const GaussianState& s0) {
    const double etas[3] = {1e-2, 5e-3, 2.5e-3};
    const double weights[3] = {1.0 / 3.0, -2.0, 8.0 / 3.0};
    const int d = s0.cov.dim();

    const BwRhs l0 = lyapunov_rhs(s0, sys);
    const SymMatrix pddot = sym_anticommutator(sys.drift, l0.dcov);
    const std::vector<double> amu = l0.dmean;
    const std::vector<double> a2mu = sym_apply(sys.drift, amu);

    SymMatrix cov_extracted = SymMatrix::diagonal(std::vector<double>(d, 0.0));
    std::vector<double> mean_extracted(d, 0.0);
    for (int i = 0; i < 3; ++i) {
        const double eta = etas[i];
        const GaussianState stepped = jko_analytic_step(s0, sys, eta);
        SymMatrix fc = sym_add(stepped.cov, s0.cov, -1.0);
        fc = sym_add(fc, l0.dcov, -eta);
        fc = sym_add(fc, pddot, -0.5 * eta * eta);
        cov_extracted = sym_add(cov_extracted, sym_scale(fc, 1.0 / (eta * eta)), weights[i]);
        for (int j = 0; j < d; ++j) {
            const double fm = (stepped.mean[j] - s0.mean[j] - eta * amu[j] -
                               0.5 * eta * eta * a2mu[j]) /
                              (eta * eta);
            mean_extracted[j] += weights[i] * fm;
        }
    }

    const BwRhs bias = jko_bias_rhs(s0, sys);
    RichardsonCheck out;
    out.cov_rel_err =
        sym_add(cov_extracted, bias.dcov, -1.0).frobenius() / bias.dcov.frobenius();
    std::vector<double> dm(d);
    for (int j = 0; j < d; ++j) dm[j] = mean_extracted[j] - bias.dmean[j];
    out.mean_rel_err = vec_norm(dm) / vec_norm(bias.dmean);
    return out;
}

}  // namespace jkoflow
