#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "clg/profile.hpp"
#include "clg/stats.hpp"

namespace clg {

using stats::Estimate;

/// Critical exponents near rho_c. Any entry may be absent.
struct ExponentSet {
    std::optional<Estimate> rhoC, beta, b, alpha, gamma, nuCross, nuPerp, zeta, z, theta;

    /// (name, member) pairs in a fixed order.
    template <typename F>
    void forEach(F&& f) {
        f("rho_c", rhoC), f("beta", beta), f("b", b), f("alpha", alpha), f("gamma", gamma);
        f("nu_cross", nuCross), f("nu_perp", nuPerp), f("zeta", zeta), f("z", z), f("theta", theta);
    }
    template <typename F>
    void forEach(F&& f) const {
        const_cast<ExponentSet*>(this)->forEach([&](const char* n, const std::optional<Estimate>& v) { f(n, v); });
    }
};

inline Estimate exact(double v) { return {v, 0.0}; }

// ---------------------------------------------------------------------------
// Power-law fits

struct PowerLawPoint {
    double u;  ///< distance to criticality, rho - rho_c
    double y;
};

struct PowerLawFit {
    double exponent = 0, prefactor = 0;
    double exponentError = 0, prefactorError = 0;
    double r2 = 0;
    double uMin = 0, uMax = 0;
    std::size_t used = 0;
    std::size_t excluded = 0;  ///< points in the window with y <= 0
};

/// OLS on (log u, log y) restricted to uMin <= u <= uMax.
inline PowerLawFit logLogFit(const std::vector<PowerLawPoint>& points, double uMin, double uMax) {
    if (!(uMin < uMax)) throw std::invalid_argument("logLogFit: empty window");
    std::vector<double> lx, ly;
    PowerLawFit fit;
    fit.uMin = uMin;
    fit.uMax = uMax;
    for (const auto& p : points) {
        if (!(p.u >= uMin && p.u <= uMax)) continue;
        if (!(p.u > 0)) throw std::invalid_argument("logLogFit: u must be positive");
        if (!(p.y > 0)) {
            ++fit.excluded;
            continue;
        }
        lx.push_back(std::log(p.u));
        ly.push_back(std::log(p.y));
    }
    if (lx.size() < 4)
        throw std::invalid_argument("logLogFit: degenerate window, " + std::to_string(lx.size()) +
                                    " usable points (need 4)");
    const auto lf = stats::linearFit(lx, ly);
    fit.used = lx.size();
    fit.exponent = lf.slope;
    fit.exponentError = lf.slopeError;
    fit.prefactor = std::exp(lf.intercept);
    fit.prefactorError = fit.prefactor * lf.interceptError;
    fit.r2 = lf.r2;
    return fit;
}

// ---------------------------------------------------------------------------
// Diffusion coefficient D = d rho_a / d rho

struct DensityPoint {
    double rho;
    double value;
    double error = 0;
};

/// Three-point Lagrange derivative: centred in the interior, one-sided at
/// the ends. Exact on quadratics, so exact on affine data and second order on
/// smooth data. Errors propagate linearly from the point errors.
inline std::vector<DensityPoint> numericalD(const std::vector<DensityPoint>& sweep) {
    const std::size_t n = sweep.size();
    if (n < 3) throw std::invalid_argument("numericalD: need at least 3 grid points");
    for (std::size_t k = 1; k < n; ++k)
        if (!(sweep[k].rho > sweep[k - 1].rho)) throw std::invalid_argument("numericalD: grid must be strictly increasing");
    std::vector<DensityPoint> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t c = k == 0 ? 1 : (k == n - 1 ? n - 2 : k);
        const double x0 = sweep[c - 1].rho, x1 = sweep[c].rho, x2 = sweep[c + 1].rho, x = sweep[k].rho;
        const double w0 = (2 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        const double w1 = (2 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        const double w2 = (2 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        const auto& p0 = sweep[c - 1];
        const auto& p1 = sweep[c];
        const auto& p2 = sweep[c + 1];
        out[k].rho = x;
        out[k].value = w0 * p0.value + w1 * p1.value + w2 * p2.value;
        out[k].error = std::sqrt(w0 * w0 * p0.error * p0.error + w1 * w1 * p1.error * p1.error +
                                 w2 * w2 * p2.error * p2.error);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Correlation lengths

struct DecayFit {
    Estimate xi;
    double amplitude = 0;  ///< |phi(r)| ~ amplitude exp(-r / xi)
    /// Sign pattern of phi on the window: +1 or -1 for a constant sign;
    /// alternating means sign(phi(r)) = sign0 (-1)^r.
    int sign0 = 1;
    bool alternating = false;
    std::size_t used = 0;
    bool nonMonotone = false;  ///< |phi| increased somewhere in the window

    double model(int r) const {
        const double s = alternating && (r % 2) ? -sign0 : sign0;
        return s * amplitude * std::exp(-r / xi.value);
    }
};

/// Fit log|phi(r)| = c - r / xi over rMin <= r <= rMax. When errors are given
/// the fit is weighted and stops at the first lag with |phi| <= 2 sigma, so
/// isolated noise excursions further out cannot flatten the slope.
inline DecayFit fitExponentialDecay(const std::vector<double>& phi, const std::vector<double>& err, int rMin, int rMax) {
    if (rMax >= static_cast<int>(phi.size())) rMax = static_cast<int>(phi.size()) - 1;
    std::vector<double> xs, ys, ws;
    std::vector<int> signs;
    DecayFit out;
    double prev = std::numeric_limits<double>::infinity();
    const bool weighted = !err.empty() && rMin <= rMax &&
                          std::all_of(err.begin() + rMin, err.begin() + rMax + 1, [](double e) { return e > 0; });
    for (int r = rMin; r <= rMax; ++r) {
        const double a = std::abs(phi[r]);
        if (!(a > 0)) continue;
        if (weighted && a <= 2 * err[r]) break;
        if (a > prev) out.nonMonotone = true;
        prev = a;
        xs.push_back(r);
        ys.push_back(std::log(a));
        signs.push_back(phi[r] > 0 ? 1 : -1);
        if (weighted) ws.push_back(a * a / (err[r] * err[r]));
    }
    if (xs.size() < 2) throw std::invalid_argument("xiCrossFit: fewer than two usable lags in window");
    const auto lf = stats::linearFit(xs, ys, ws);
    if (!(lf.slope < 0)) throw std::invalid_argument("xiCrossFit: correlations do not decay on the window");
    out.used = xs.size();
    out.xi = {-1.0 / lf.slope, lf.slopeError / (lf.slope * lf.slope)};
    out.amplitude = std::exp(lf.intercept);
    // majority vote between "constant sign" and "alternating sign"
    int constVotes = 0, altVotes = 0;
    for (std::size_t k = 0; k < signs.size(); ++k) {
        const int r = static_cast<int>(xs[k]);
        constVotes += signs[k] == signs[0];
        altVotes += signs[k] == signs[0] * (((r - static_cast<int>(xs[0])) % 2) ? -1 : 1);
    }
    out.alternating = altVotes > constVotes;
    const int r0 = static_cast<int>(xs[0]);
    out.sign0 = out.alternating && (r0 % 2) ? -signs[0] : signs[0];
    return out;
}

inline DecayFit xiCrossFit(const CorrelationProfile& p, int rMin = 2, int rMax = -1) {
    if (rMax < 0) rMax = p.maxLag;
    const auto& err = p.uncertaintyFlagged ? std::vector<double>{} : p.shellError;
    return fitExponentialDecay(p.shellPhi, err, rMin, rMax);
}

/// xi_perp from L^d (rho - rho_c) ~ L^zeta, i.e. (rho - rho_c)^(-1/(d - zeta)).
inline Estimate xiPerpHiddenDensity(double rho, Estimate rhoC, Estimate zeta, int d) {
    const double gap = d - zeta.value;
    if (!(std::abs(gap) > 0)) throw std::invalid_argument("xiPerp hidden-density: zeta = d gives no length scale");
    if (gap < 0) throw std::invalid_argument("xiPerp hidden-density: zeta must be below d");
    const double u = rho - rhoC.value;
    if (!(u > 0)) throw std::invalid_argument("xiPerp hidden-density: rho must exceed rho_c");
    const double xi = std::pow(u, -1.0 / gap);
    // d xi / d rho_c = xi / (gap u);  d xi / d zeta = -xi ln(u) / gap^2
    const double eRho = std::isfinite(rhoC.error) ? xi / (gap * u) * rhoC.error : 0.0;
    const double eZeta = std::isfinite(zeta.error) ? xi * std::log(u) / (gap * gap) * zeta.error : 0.0;
    return {xi, std::hypot(eRho, eZeta)};
}

struct CrossoverRung {
    int L;
    std::vector<double> absorptionTimes;  ///< +inf marks a censored run
};

struct CrossoverEstimate {
    double lower = 0;  ///< largest rung that still absorbed quickly (0 if none)
    double upper = std::numeric_limits<double>::infinity();  ///< first long-lived rung
    bool censored = false;  ///< no crossover inside the ladder
    Estimate xi;            ///< geometric midpoint of [lower, upper] when bracketed
};

/// Size L* at which the `level` quantile of the absorption time first exceeds
/// factor * L^2. Rungs must be sorted by L.
inline CrossoverEstimate xiPerpCrossover(const std::vector<CrossoverRung>& ladder, double factor = 10.0,
                                         double level = 0.5) {
    if (ladder.empty()) throw std::invalid_argument("xiPerp crossover: empty ladder");
    CrossoverEstimate out;
    for (const auto& rung : ladder) {
        const double q = stats::quantile(rung.absorptionTimes, level);
        const double threshold = factor * static_cast<double>(rung.L) * rung.L;
        if (q > threshold) {
            out.upper = rung.L;
            break;
        }
        out.lower = rung.L;
    }
    if (std::isinf(out.upper)) {
        out.censored = true;
        out.xi = {out.lower, std::numeric_limits<double>::infinity()};
    } else if (out.lower == 0) {
        out.censored = true;
        out.xi = {out.upper, std::numeric_limits<double>::infinity()};
    } else {
        out.xi = {std::sqrt(out.lower * out.upper), 0.5 * (out.upper - out.lower)};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scaling relations

struct Residual {
    std::string name;
    std::string relation;
    Estimate value;
    bool flagged = false;
};

struct RelationReport {
    std::vector<Residual> residuals;
    std::vector<std::string> gaps;
    std::optional<Estimate> zDerived, thetaDerived;
    /// The z and theta formulas assume gamma = 1.
    bool gammaIsOne = false;
    std::vector<std::string> notes;

    bool consistent() const {
        for (const auto& r : residuals)
            if (r.flagged) return false;
        return true;
    }
    const Residual* find(const std::string& name) const {
        for (const auto& r : residuals)
            if (r.name == name) return &r;
        return nullptr;
    }
};

namespace detail {

/// Value and linearly propagated error of f at the given estimates.
inline Estimate propagate(const std::function<double(const std::vector<double>&)>& f, const std::vector<Estimate>& in) {
    std::vector<double> x(in.size());
    for (std::size_t k = 0; k < in.size(); ++k) x[k] = in[k].value;
    const double v = f(x);
    double var = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const double e = std::isfinite(in[k].error) ? in[k].error : 0.0;
        if (e == 0) continue;
        const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
        auto xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double g = (f(xp) - f(xm)) / (2 * h);
        var += g * g * e * e;
    }
    return {v, std::sqrt(var)};
}

}  // namespace detail

/// Residuals of the scaling relations among the supplied exponents. A
/// residual is flagged when it exceeds max(3 sigma, tolerance).
inline RelationReport relationCheck(const ExponentSet& e, int d, double tolerance = 1e-9) {
    RelationReport rep;
    const double D = d;
    auto need = [&](std::initializer_list<std::pair<const char*, const std::optional<Estimate>*>> req,
                    const std::string& name) {
        bool ok = true;
        for (auto [n, v] : req)
            if (!v->has_value()) {
                rep.gaps.push_back(name + " needs " + n);
                ok = false;
            }
        return ok;
    };
    auto add = [&](std::string name, std::string rel, Estimate v) {
        const double bound = std::max(3 * (std::isfinite(v.error) ? v.error : 0.0), tolerance);
        rep.residuals.push_back({std::move(name), std::move(rel), v, std::abs(v.value) > bound});
    };

    if (need({{"alpha", &e.alpha}, {"beta", &e.beta}}, "r1"))
        add("r1", "alpha - beta + 1",
            detail::propagate([](const auto& x) { return x[0] - x[1] + 1; }, {*e.alpha, *e.beta}));
    if (need({{"gamma", &e.gamma}, {"nu_cross", &e.nuCross}, {"zeta", &e.zeta}}, "r2"))
        add("r2", "gamma - nu_cross (d - 2 zeta)",
            detail::propagate([D](const auto& x) { return x[0] - x[1] * (D - 2 * x[2]); },
                              {*e.gamma, *e.nuCross, *e.zeta}));
    if (need({{"nu_perp", &e.nuPerp}, {"zeta", &e.zeta}}, "r3"))
        add("r3", "nu_perp (d - zeta) - 1",
            detail::propagate([D](const auto& x) { return x[0] * (D - x[1]) - 1; }, {*e.nuPerp, *e.zeta}));
    if (need({{"alpha", &e.alpha}, {"b", &e.b}, {"gamma", &e.gamma}}, "r4"))
        add("r4", "alpha - b + gamma",
            detail::propagate([](const auto& x) { return x[0] - x[1] + x[2]; }, {*e.alpha, *e.b, *e.gamma}));

    if (e.gamma) rep.gammaIsOne = std::abs(e.gamma->value - 1) <= std::max(3 * e.gamma->error, tolerance);

    if (e.zeta && e.beta) {
        rep.zDerived = detail::propagate([D](const auto& x) { return (x[0] - D) * (1 - x[1]) + 2; }, {*e.zeta, *e.beta});
        rep.thetaDerived = Estimate{D - e.zeta->value, e.zeta->error};
        if (!rep.gammaIsOne)
            rep.notes.push_back("z and theta formulas assume gamma = 1; derived values are not applicable here");
    }

    // Scale invariance of the fluctuation equation:
    //   zeta - d - z = (zeta - d) beta - 2 = (zeta - d)(beta + gamma - 1)/2 - (z + theta)/2 - 1
    if (e.z && e.zeta && e.beta) {
        add("r5", "(zeta - d - z) - ((zeta - d) beta - 2)",
            detail::propagate([D](const auto& x) { return (x[0] - D) * (1 - x[2]) + 2 - x[1]; },
                              {*e.zeta, *e.z, *e.beta}));
    } else if (e.z) {
        rep.gaps.push_back("r5 needs zeta and beta");
    }
    if (e.z && e.theta && e.zeta && e.beta && e.gamma) {
        add("r6", "((zeta - d) beta - 2) - ((zeta - d)(beta + gamma - 1)/2 - (z + theta)/2 - 1)",
            detail::propagate(
                [D](const auto& x) {
                    const double s = x[0] - D;
                    return (s * x[1] - 2) - (s * (x[1] + x[2] - 1) / 2 - (x[3] + x[4]) / 2 - 1);
                },
                {*e.zeta, *e.beta, *e.gamma, *e.z, *e.theta}));
    } else if (e.theta) {
        rep.gaps.push_back("r6 needs z, zeta, beta and gamma");
    }
    return rep;
}

}  // namespace clg
