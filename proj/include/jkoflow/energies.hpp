#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jkoflow/fd.hpp"
#include "jkoflow/grid1d.hpp"

namespace jkoflow {

// Catalog of energy functionals on grid densities. Each exposes the value,
// the first variation (pointwise field + finite-difference spatial gradient),
// the squared metric slope, the modified energy J - (eta/4)|dJ|^2 and the
// implicit-bias term (eta/4)|dJ|^2.

class EnergyFunctional {
public:
    enum class Kind { potential, entropy, kl, interaction, internal, free_energy };

    static EnergyFunctional potential(std::vector<double> field) {
        EnergyFunctional f(Kind::potential);
        f.field_ = std::move(field);
        return f;
    }

    static EnergyFunctional entropy() { return EnergyFunctional(Kind::entropy); }

    // log_target must include its normalizing constant and be finite on the grid.
    static EnergyFunctional kl(std::vector<double> log_target) {
        for (std::size_t i = 0; i < log_target.size(); ++i)
            if (!std::isfinite(log_target[i]))
                throw std::invalid_argument("EnergyFunctional::kl: log target not finite at node " +
                                            std::to_string(i));
        EnergyFunctional f(Kind::kl);
        f.field_ = std::move(log_target);
        return f;
    }

    static EnergyFunctional interaction(std::function<double(double)> kernel) {
        EnergyFunctional f(Kind::interaction);
        f.kernel_ = std::move(kernel);
        return f;
    }

    static EnergyFunctional internal(std::function<double(double)> u,
                                     std::function<double(double)> u_prime) {
        EnergyFunctional f(Kind::internal);
        f.u_ = std::move(u);
        f.u_prime_ = std::move(u_prime);
        return f;
    }

    static EnergyFunctional free_energy(std::vector<double> field, double beta) {
        if (!(beta > 0.0)) throw std::invalid_argument("EnergyFunctional::free_energy: beta > 0");
        EnergyFunctional f(Kind::free_energy);
        f.field_ = std::move(field);
        f.beta_ = beta;
        return f;
    }

    Kind kind() const { return kind_; }
    const std::vector<double>& field() const { return field_; }
    double beta() const { return beta_; }
    const std::function<double(double)>& kernel() const { return kernel_; }
    const std::function<double(double)>& u() const { return u_; }
    const std::function<double(double)>& u_prime() const { return u_prime_; }

private:
    explicit EnergyFunctional(Kind k) : kind_(k) {}

    Kind kind_;
    std::vector<double> field_;
    std::function<double(double)> kernel_;
    std::function<double(double)> u_, u_prime_;
    double beta_ = 1.0;
};

namespace detail {

inline void check_field_size(const EnergyFunctional& f, const GridDensity1D& rho) {
    if (!f.field().empty() && static_cast<int>(f.field().size()) != rho.n())
        throw std::invalid_argument("EnergyFunctional: field length " +
                                    std::to_string(f.field().size()) + " vs grid size " +
                                    std::to_string(rho.n()));
}

inline std::vector<double> floored_log(const GridDensity1D& rho) {
    std::vector<double> l(rho.n());
    for (int i = 0; i < rho.n(); ++i) l[i] = std::log(std::max(rho.value(i), kDensityFloor));
    return l;
}

inline void check_kernel_even(const EnergyFunctional& f, const GridDensity1D& rho) {
    const double span = rho.x_max() - rho.x_min();
    for (int k = 0; k <= 64; ++k) {
        const double t = span * k / 64.0;
        if (std::abs(f.kernel()(t) - f.kernel()(-t)) > 1e-12)
            throw std::invalid_argument("EnergyFunctional: interaction kernel not even at offset " +
                                        std::to_string(t));
    }
}

inline constexpr int kInteractionMaxNodes = 8192;

}  // namespace detail

inline double evaluate(const EnergyFunctional& f, const GridDensity1D& rho) {
    detail::check_field_size(f, rho);
    const int n = rho.n();
    std::vector<double> integrand(n, 0.0);
    switch (f.kind()) {
        case EnergyFunctional::Kind::potential:
            for (int i = 0; i < n; ++i) integrand[i] = f.field()[i] * rho.value(i);
            break;
        case EnergyFunctional::Kind::entropy:
            for (int i = 0; i < n; ++i) {
                const double r = rho.value(i);
                if (r >= kDensityFloor) integrand[i] = r * std::log(r);
            }
            break;
        case EnergyFunctional::Kind::kl:
            for (int i = 0; i < n; ++i) {
                const double r = rho.value(i);
                if (r >= kDensityFloor) integrand[i] = r * (std::log(r) - f.field()[i]);
            }
            break;
        case EnergyFunctional::Kind::interaction: {
            if (n > detail::kInteractionMaxNodes)
                throw std::invalid_argument("EnergyFunctional: interaction capped at 8192 nodes");
            detail::check_kernel_even(f, rho);
            const double h = rho.h();
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                const double wi = (i == 0 || i == n - 1) ? 0.5 * h : h;
                double inner = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double wj = (j == 0 || j == n - 1) ? 0.5 * h : h;
                    inner += wj * rho.value(j) * f.kernel()(rho.x(i) - rho.x(j));
                }
                s += wi * rho.value(i) * inner;
            }
            return 0.5 * s;
        }
        case EnergyFunctional::Kind::internal:
            for (int i = 0; i < n; ++i) integrand[i] = f.u()(rho.value(i));
            break;
        case EnergyFunctional::Kind::free_energy:
            for (int i = 0; i < n; ++i) {
                const double r = rho.value(i);
                integrand[i] = f.field()[i] * r;
                if (r >= kDensityFloor) integrand[i] += r * std::log(r) / f.beta();
            }
            break;
    }
    return trapz(integrand, rho.h());
}

struct FirstVariationField {
    std::vector<double> value;     // delta J / delta rho at each node
    std::vector<double> gradient;  // its finite-difference spatial derivative
};

inline FirstVariationField first_variation(const EnergyFunctional& f, const GridDensity1D& rho) {
    detail::check_field_size(f, rho);
    const int n = rho.n();
    FirstVariationField out;
    out.value.assign(n, 0.0);
    switch (f.kind()) {
        case EnergyFunctional::Kind::potential:
            out.value = f.field();
            break;
        case EnergyFunctional::Kind::entropy: {
            const std::vector<double> l = detail::floored_log(rho);
            for (int i = 0; i < n; ++i) out.value[i] = l[i] + 1.0;
            break;
        }
        case EnergyFunctional::Kind::kl: {
            const std::vector<double> l = detail::floored_log(rho);
            for (int i = 0; i < n; ++i) out.value[i] = l[i] - f.field()[i] + 1.0;
            break;
        }
        case EnergyFunctional::Kind::interaction: {
            if (n > detail::kInteractionMaxNodes)
                throw std::invalid_argument("EnergyFunctional: interaction capped at 8192 nodes");
            detail::check_kernel_even(f, rho);
            const double h = rho.h();
            for (int i = 0; i < n; ++i) {
                double s = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double wj = (j == 0 || j == n - 1) ? 0.5 * h : h;
                    s += wj * rho.value(j) * f.kernel()(rho.x(i) - rho.x(j));
                }
                out.value[i] = s;
            }
            break;
        }
        case EnergyFunctional::Kind::internal:
            for (int i = 0; i < n; ++i) out.value[i] = f.u_prime()(rho.value(i));
            break;
        case EnergyFunctional::Kind::free_energy: {
            const std::vector<double> l = detail::floored_log(rho);
            for (int i = 0; i < n; ++i) out.value[i] = f.field()[i] + l[i] / f.beta();
            break;
        }
    }
    out.gradient = fd_gradient(out.value, rho.h());
    return out;
}

// |dJ(rho)|^2 = integral of |grad dJ/drho|^2 against rho.
inline double metric_slope_sq(const EnergyFunctional& f, const GridDensity1D& rho) {
    const FirstVariationField fv = first_variation(f, rho);
    std::vector<double> integrand(rho.n());
    for (int i = 0; i < rho.n(); ++i)
        integrand[i] = fv.gradient[i] * fv.gradient[i] * rho.value(i);
    return trapz(integrand, rho.h());
}

// J^eta = J - (eta/4)|dJ|^2, as a value-level evaluator.
struct ModifiedEnergy {
    EnergyFunctional base;
    double eta;

    double evaluate_at(const GridDensity1D& rho) const {
        return evaluate(base, rho) - 0.25 * eta * metric_slope_sq(base, rho);
    }
};

inline ModifiedEnergy modified_energy(const EnergyFunctional& f, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("modified_energy: eta must be >= 0");
    return ModifiedEnergy{f, eta};
}

// H^eta = J - J^eta = (eta/4)|dJ|^2.
inline double implicit_bias(const EnergyFunctional& f, const GridDensity1D& rho, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("implicit_bias: eta must be >= 0");
    return 0.25 * eta * metric_slope_sq(f, rho);
}

// Velocity of the corrected Langevin flow for the free energy E + beta^-1 log:
//   v = -(E' + beta^-1 (log rho)')
//       + (eta/4) ((|E'|^2)' - beta^-2 (|(log rho)'|^2)')
//       - (eta/(2 beta)) (Lap(E + beta^-1 log rho))'
// The third-derivative term has no natural boundary closure on a finite
// grid, so the whole correction is zeroed on the two outermost nodes at each
// end. beta may be +infinity (pure potential flow).
inline std::vector<double> corrected_velocity_langevin(const GridDensity1D& rho,
                                                       const std::vector<double>& energy,
                                                       double beta, double eta) {
    const int n = rho.n();
    if (static_cast<int>(energy.size()) != n)
        throw std::invalid_argument("corrected_velocity_langevin: energy field size mismatch");
    if (!(beta > 0.0)) throw std::invalid_argument("corrected_velocity_langevin: beta must be > 0");
    if (!(eta >= 0.0)) throw std::invalid_argument("corrected_velocity_langevin: eta must be >= 0");
    const double binv = std::isinf(beta) ? 0.0 : 1.0 / beta;
    const double h = rho.h();

    const std::vector<double> ge = fd_gradient(energy, h);
    std::vector<double> logr;
    std::vector<double> gl(n, 0.0);
    if (binv != 0.0) {
        logr = detail::floored_log(rho);
        gl = fd_gradient(logr, h);
    }

    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = -(ge[i] + binv * gl[i]);
    if (eta == 0.0) return v;

    std::vector<double> ge2(n), gl2(n);
    for (int i = 0; i < n; ++i) {
        ge2[i] = ge[i] * ge[i];
        gl2[i] = gl[i] * gl[i];
    }
    const std::vector<double> t1 = fd_gradient(ge2, h);
    const std::vector<double> t2 = fd_gradient(gl2, h);
    std::vector<double> free_field(energy);
    if (binv != 0.0)
        for (int i = 0; i < n; ++i) free_field[i] += binv * logr[i];
    const std::vector<double> t3 = fd_gradient(fd_laplacian(free_field, h), h);

    for (int i = 2; i + 2 < n; ++i)
        v[i] += 0.25 * eta * (t1[i] - binv * binv * t2[i]) - 0.5 * eta * binv * t3[i];
    return v;
}

// First variation of the Fisher information I[rho] = int |(log rho)'|^2 rho,
// in its two algebraic forms: -2 Lap(log rho) - |(log rho)'|^2, and the
// equivalent -4 (sqrt rho)'' / sqrt(rho).
inline std::vector<double> fisher_first_variation(const GridDensity1D& rho) {
    const std::vector<double> l = detail::floored_log(rho);
    const std::vector<double> g = fd_gradient(l, rho.h());
    const std::vector<double> lap = fd_laplacian(l, rho.h());
    std::vector<double> out(rho.n());
    for (int i = 0; i < rho.n(); ++i) out[i] = -2.0 * lap[i] - g[i] * g[i];
    return out;
}

inline std::vector<double> fisher_first_variation_sqrt_form(const GridDensity1D& rho) {
    const int n = rho.n();
    std::vector<double> s(n);
    for (int i = 0; i < n; ++i) s[i] = std::sqrt(std::max(rho.value(i), kDensityFloor));
    const std::vector<double> lap = fd_laplacian(s, rho.h());
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = -4.0 * lap[i] / s[i];
    return out;
}

inline double fisher_information(const GridDensity1D& rho) {
    return metric_slope_sq(EnergyFunctional::entropy(), rho);
}

}  // namespace jkoflow
