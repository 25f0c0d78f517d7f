#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace jkoflow {

struct SlopeFit {
    double slope;
    double intercept;
    double r_squared;
};

// Ordinary least squares on (log eta, log err).
inline SlopeFit fit_loglog(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 3) throw std::invalid_argument("fit_loglog: need at least 3 pairs");
    const double n = static_cast<double>(pairs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::vector<double> xs, ys;
    for (const auto& [eta, err] : pairs) {
        if (!(eta > 0.0) || !(err > 0.0))
            throw std::invalid_argument("fit_loglog: values must be positive");
        const double x = std::log(eta), y = std::log(err);
        xs.push_back(x);
        ys.push_back(y);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    // n*sxx - sx^2 = n^2 var(log eta); compare against the uncancelled
    // magnitude so repeated abscissae are caught through the roundoff.
    const double denom = n * sxx - sx * sx;
    const double scale = n * sxx + sx * sx;
    if (!(denom > 1e-12 * std::max(1.0, scale)))
        throw std::invalid_argument("fit_loglog: degenerate abscissae");
    SlopeFit f;
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
    double ss_res = 0.0, ss_tot = 0.0;
    const double ymean = sy / n;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double pred = f.intercept + f.slope * xs[i];
        ss_res += (ys[i] - pred) * (ys[i] - pred);
        ss_tot += (ys[i] - ymean) * (ys[i] - ymean);
    }
    f.r_squared = ss_tot == 0.0 ? 1.0 : std::max(0.0, 1.0 - ss_res / ss_tot);
    return f;
}

}  // namespace jkoflow
