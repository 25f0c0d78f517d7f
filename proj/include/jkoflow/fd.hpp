#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace jkoflow {

// Uniform-grid calculus used throughout the 1D modules. Conventions are part
// of the interface: tests and the correction formulas assume exactly these
// stencils.

inline double trapz(const std::vector<double>& f, double h) {
    if (f.size() < 2) throw std::invalid_argument("trapz: need at least 2 nodes");
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * h;
}

// Second-order first derivative: centered in the interior, one-sided
// (-3 f0 + 4 f1 - f2) / 2h at the boundary nodes.
inline std::vector<double> fd_gradient(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 3) throw std::invalid_argument("fd_gradient: need at least 3 nodes");
    std::vector<double> g(n);
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i) g[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    return g;
}

// Second derivative: standard three-point stencil in the interior, the
// four-point one-sided stencil (2 f0 - 5 f1 + 4 f2 - f3) / h^2 at the ends.
inline std::vector<double> fd_laplacian(const std::vector<double>& f, double h) {
    const std::size_t n = f.size();
    if (n < 4) throw std::invalid_argument("fd_laplacian: need at least 4 nodes");
    const double h2 = h * h;
    std::vector<double> l(n);
    l[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    for (std::size_t i = 1; i + 1 < n; ++i) l[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) / h2;
    l[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    return l;
}

// Densities below this are treated as vacuum: excluded from logs and ratios.
inline constexpr double kDensityFloor = 1e-300;

}  // namespace jkoflow
