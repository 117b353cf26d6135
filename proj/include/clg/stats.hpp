#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace clg::stats {

struct Estimate {
    double value = std::numeric_limits<double>::quiet_NaN();
    double error = std::numeric_limits<double>::quiet_NaN();
};

inline double mean(std::span<const double> x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(std::span<const double> x) {
    if (x.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(x);
    double s = 0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

/// Mean with the standard error of independent samples.
inline Estimate meanStderr(std::span<const double> x) {
    return {mean(x), std::sqrt(variance(x) / static_cast<double>(x.size()))};
}

/// Mean with a batch-means standard error for a correlated series. The
/// trailing remainder that does not fill a batch still enters the mean.
inline Estimate batchMeans(std::span<const double> x, std::size_t batches = 20) {
    if (x.size() < 2) return {mean(x), std::numeric_limits<double>::quiet_NaN()};
    batches = std::min(batches, x.size());
    const std::size_t per = x.size() / batches;
    std::vector<double> bm(batches);
    for (std::size_t b = 0; b < batches; ++b) bm[b] = mean(x.subspan(b * per, per));
    return {mean(x), std::sqrt(variance(bm) / static_cast<double>(batches))};
}

/// Delete-one-group jackknife. `estimator(g)` must return the estimate with
/// group g left out; `full` is the estimate on all data.
inline Estimate jackknife(std::size_t groups, double full, const std::function<double(std::size_t)>& estimator) {
    if (groups < 2) return {full, std::numeric_limits<double>::quiet_NaN()};
    std::vector<double> loo(groups);
    for (std::size_t g = 0; g < groups; ++g) loo[g] = estimator(g);
    const double m = mean(loo);
    double s = 0;
    for (double v : loo) s += (v - m) * (v - m);
    const double n = static_cast<double>(groups);
    return {full, std::sqrt((n - 1) / n * s)};
}

struct LinearFit {
    double slope = 0, intercept = 0;
    double slopeError = 0, interceptError = 0;
    double r2 = 0;
    std::size_t points = 0;
};

/// Least squares y = intercept + slope x. With `weights` empty this is OLS and
/// errors come from the residual scatter; otherwise weights are 1/sigma^2 and
/// errors are the formal ones.
inline LinearFit linearFit(std::span<const double> x, std::span<const double> y, std::span<const double> weights = {}) {
    const std::size_t n = x.size();
    if (n != y.size() || (!weights.empty() && weights.size() != n)) throw std::invalid_argument("linearFit: size mismatch");
    if (n < 2) throw std::invalid_argument("linearFit: need at least two points");
    const bool weighted = !weights.empty();
    auto w = [&](std::size_t k) { return weighted ? weights[k] : 1.0; };
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sw += w(k);
        sx += w(k) * x[k];
        sy += w(k) * y[k];
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double dx = x[k] - xm, dy = y[k] - ym;
        sxx += w(k) * dx * dx;
        sxy += w(k) * dx * dy;
        syy += w(k) * dy * dy;
    }
    if (!(sxx > 0)) throw std::invalid_argument("linearFit: degenerate abscissae");
    LinearFit f;
    f.points = n;
    f.slope = sxy / sxx;
    f.intercept = ym - f.slope * xm;
    double rss = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = y[k] - f.intercept - f.slope * x[k];
        rss += w(k) * r * r;
    }
    f.r2 = syy > 0 ? std::clamp(1.0 - rss / syy, 0.0, 1.0) : 1.0;
    const double s2 = weighted ? 1.0 : (n > 2 ? rss / static_cast<double>(n - 2) : 0.0);
    f.slopeError = std::sqrt(s2 / sxx);
    f.interceptError = std::sqrt(s2 * (1.0 / sw + xm * xm / sxx));
    return f;
}

/// Quantile by linear interpolation between order statistics; +inf entries
/// stand for right-censored samples.
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) throw std::invalid_argument("quantile of empty sample");
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    if (std::isinf(x[hi]) || std::isinf(x[lo])) return x[hi];
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace clg::stats
