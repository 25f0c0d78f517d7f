#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jkoflow {

// Small dense linear algebra for the Gaussian-flow module. Dimensions are
// capped at 16: everything here is meant for covariance-sized problems, and
// the cyclic Jacobi eigensolver below is quadratically convergent but not
// meant for large matrices.

inline constexpr int kMaxDim = 16;
inline constexpr double kSpdThreshold = 1e-12;

// General square matrix, row-major. Thin helper; no validation beyond shape.
struct Mat {
    int n = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int n_, double fill = 0.0) : n(n_), a(static_cast<std::size_t>(n_) * n_, fill) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

    static Mat identity(int n_) {
        Mat m(n_);
        for (int i = 0; i < n_; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Mat mat_mul(const Mat& x, const Mat& y) {
    Mat z(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int k = 0; k < x.n; ++k) {
            const double xik = x(i, k);
            if (xik == 0.0) continue;
            for (int j = 0; j < x.n; ++j) z(i, j) += xik * y(k, j);
        }
    return z;
}

inline Mat mat_transpose(const Mat& x) {
    Mat z(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int j = 0; j < x.n; ++j) z(i, j) = x(j, i);
    return z;
}

inline std::vector<double> mat_apply(const Mat& x, const std::vector<double>& v) {
    std::vector<double> r(v.size(), 0.0);
    for (int i = 0; i < x.n; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.n; ++j) s += x(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

// Symmetric matrix. Construction symmetrizes the input; asymmetry larger
// than 1e-12 (absolute, entrywise) is rejected rather than silently averaged.
class SymMatrix {
public:
    SymMatrix() = default;

    SymMatrix(int dim, std::vector<double> entries) {
        if (dim < 1 || dim > kMaxDim)
            throw std::invalid_argument("SymMatrix: dim " + std::to_string(dim) +
                                        " outside [1, " + std::to_string(kMaxDim) + "]");
        if (entries.size() != static_cast<std::size_t>(dim) * dim)
            throw std::invalid_argument("SymMatrix: expected " + std::to_string(dim * dim) +
                                        " entries, got " + std::to_string(entries.size()));
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) {
                const double d = entries[static_cast<std::size_t>(i) * dim + j] -
                                 entries[static_cast<std::size_t>(j) * dim + i];
                if (!(std::abs(d) <= 1e-12))
                    throw std::invalid_argument("SymMatrix: entries (" + std::to_string(i) + "," +
                                                std::to_string(j) + ") asymmetric by " +
                                                std::to_string(d));
            }
        dim_ = dim;
        a_ = std::move(entries);
        for (int i = 0; i < dim; ++i)
            for (int j = i + 1; j < dim; ++j) {
                const double m = 0.5 * (a_[idx(i, j)] + a_[idx(j, i)]);
                a_[idx(i, j)] = m;
                a_[idx(j, i)] = m;
            }
    }

    static SymMatrix identity(int dim) {
        std::vector<double> e(static_cast<std::size_t>(dim) * dim, 0.0);
        for (int i = 0; i < dim; ++i) e[static_cast<std::size_t>(i) * dim + i] = 1.0;
        return SymMatrix(dim, std::move(e));
    }

    static SymMatrix diagonal(const std::vector<double>& d) {
        const int dim = static_cast<int>(d.size());
        std::vector<double> e(static_cast<std::size_t>(dim) * dim, 0.0);
        for (int i = 0; i < dim; ++i) e[static_cast<std::size_t>(i) * dim + i] = d[i];
        return SymMatrix(dim, std::move(e));
    }

    // Symmetrizes x (no asymmetry check): for products like V D V^T whose
    // asymmetry is pure round-off.
    static SymMatrix from_symmetric_part(const Mat& x) {
        std::vector<double> e(x.a);
        for (int i = 0; i < x.n; ++i)
            for (int j = i + 1; j < x.n; ++j) {
                const double m = 0.5 * (e[static_cast<std::size_t>(i) * x.n + j] +
                                        e[static_cast<std::size_t>(j) * x.n + i]);
                e[static_cast<std::size_t>(i) * x.n + j] = m;
                e[static_cast<std::size_t>(j) * x.n + i] = m;
            }
        return SymMatrix(x.n, std::move(e));
    }

    int dim() const { return dim_; }
    double operator()(int i, int j) const { return a_[idx(i, j)]; }
    const std::vector<double>& entries() const { return a_; }

    Mat to_mat() const {
        Mat m(dim_);
        m.a = a_;
        return m;
    }

    double frobenius() const {
        double s = 0.0;
        for (double v : a_) s += v * v;
        return std::sqrt(s);
    }

    double trace() const {
        double s = 0.0;
        for (int i = 0; i < dim_; ++i) s += a_[idx(i, i)];
        return s;
    }

private:
    std::size_t idx(int i, int j) const { return static_cast<std::size_t>(i) * dim_ + j; }

    int dim_ = 0;
    std::vector<double> a_;
};

inline SymMatrix sym_add(const SymMatrix& x, const SymMatrix& y, double cy = 1.0) {
    std::vector<double> e(x.entries());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += cy * y.entries()[i];
    return SymMatrix(x.dim(), std::move(e));
}

inline SymMatrix sym_scale(const SymMatrix& x, double c) {
    std::vector<double> e(x.entries());
    for (double& v : e) v *= c;
    return SymMatrix(x.dim(), std::move(e));
}

struct EigenDecomposition {
    std::vector<double> eigenvalues;  // ascending
    Mat eigenvectors;                 // columns, orthonormal
};

// Cyclic Jacobi. Converged when the off-diagonal Frobenius norm drops below
// 1e-13 * ||m||_F; the failure message carries the last residual so callers
// can see how far off a pathological input was.
inline EigenDecomposition sym_eigen(const SymMatrix& m) {
    const int n = m.dim();
    Mat b = m.to_mat();
    Mat v = Mat::identity(n);
    const double target = 1e-13 * m.frobenius();

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) s += b(i, j) * b(i, j);
        return std::sqrt(s);
    };

    double off = off_norm();
    const int max_sweeps = 100;
    int sweep = 0;
    for (; sweep < max_sweeps && off > target; ++sweep) {
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = b(p, q);
                if (apq == 0.0) continue;
                const double theta = (b(q, q) - b(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double bkp = b(k, p), bkq = b(k, q);
                    b(k, p) = c * bkp - s * bkq;
                    b(k, q) = s * bkp + c * bkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double bpk = b(p, k), bqk = b(q, k);
                    b(p, k) = c * bpk - s * bqk;
                    b(q, k) = s * bpk + c * bqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        off = off_norm();
    }
    if (off > target)
        throw std::runtime_error("sym_eigen: no convergence after " + std::to_string(max_sweeps) +
                                 " sweeps, off-diagonal residual " + std::to_string(off) +
                                 " > target " + std::to_string(target));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) { return b(i, i) < b(j, j); });

    EigenDecomposition d;
    d.eigenvalues.resize(n);
    d.eigenvectors = Mat(n);
    for (int j = 0; j < n; ++j) {
        d.eigenvalues[j] = b(order[j], order[j]);
        for (int i = 0; i < n; ++i) d.eigenvectors(i, j) = v(i, order[j]);
    }
    return d;
}

// f(m) = V f(D) V^T for SPD m; rejects eigenvalues at or below kSpdThreshold.
template <typename F>
inline SymMatrix spd_spectral_map(const SymMatrix& m, F&& f, const char* who) {
    const EigenDecomposition d = sym_eigen(m);
    for (double lam : d.eigenvalues)
        if (!(lam > kSpdThreshold))
            throw std::domain_error(std::string(who) + ": eigenvalue " + std::to_string(lam) +
                                    " not above SPD threshold 1e-12");
    const int n = m.dim();
    Mat scaled(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) scaled(i, j) = d.eigenvectors(i, j) * f(d.eigenvalues[j]);
    return SymMatrix::from_symmetric_part(mat_mul(scaled, mat_transpose(d.eigenvectors)));
}

inline SymMatrix spd_sqrt(const SymMatrix& m) {
    return spd_spectral_map(m, [](double x) { return std::sqrt(x); }, "spd_sqrt");
}

inline SymMatrix spd_inverse(const SymMatrix& m) {
    return spd_spectral_map(m, [](double x) { return 1.0 / x; }, "spd_inverse");
}

inline double min_eigenvalue(const SymMatrix& m) {
    return sym_eigen(m).eigenvalues.front();
}

inline std::vector<double> sym_apply(const SymMatrix& m, const std::vector<double>& v) {
    std::vector<double> r(v.size(), 0.0);
    for (int i = 0; i < m.dim(); ++i) {
        double s = 0.0;
        for (int j = 0; j < m.dim(); ++j) s += m(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

// A * B + B * A for symmetric A, B (result symmetric).
inline SymMatrix sym_anticommutator(const SymMatrix& a, const SymMatrix& b) {
    const Mat p = mat_mul(a.to_mat(), b.to_mat());
    Mat s(a.dim());
    for (int i = 0; i < a.dim(); ++i)
        for (int j = 0; j < a.dim(); ++j) s(i, j) = p(i, j) + p(j, i);
    return SymMatrix::from_symmetric_part(s);
}

// A * B * A for symmetric A, B.
inline SymMatrix sym_sandwich(const SymMatrix& a, const SymMatrix& b) {
    return SymMatrix::from_symmetric_part(mat_mul(mat_mul(a.to_mat(), b.to_mat()), a.to_mat()));
}

inline double vec_dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double vec_norm(const std::vector<double>& x) { return std::sqrt(vec_dot(x, x)); }

}  // namespace jkoflow
