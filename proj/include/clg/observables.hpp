#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "clg/exponents.hpp"
#include "clg/lattice.hpp"
#include "clg/profile.hpp"
#include "clg/random.hpp"
#include "clg/simulation.hpp"
#include "clg/stats.hpp"

namespace clg {

// ---------------------------------------------------------------------------
// Single-configuration observables

/// n_a / L^d
inline double measureRhoA(const Configuration& c) {
    return static_cast<double>(c.activeCount()) / static_cast<double>(c.volume());
}

/// Allowed ordered jumps per site.
inline double measureActivity(const ActiveEdgeSet& edges, std::size_t volume) {
    return static_cast<double>(edges.size()) / static_cast<double>(volume);
}

inline double measureActivity(const Configuration& c) { return measureActivity(allowedJumps(c), c.volume()); }

/// Number of unordered nearest-neighbour edges inside the lattice.
inline std::size_t latticeEdgeCount(const Geometry& g) {
    std::size_t slots = 0;
    for (Site s = 0; s < g.volume(); ++s)
        for (int k = 0; k < g.degree(); ++k) slots += g.neighbor(s, k) != kMirror;
    return slots / 2;
}

/// Number of points of Z^d with l1 norm exactly r.
inline double latticeShellSize(int d, int r) {
    if (r == 0) return 1;
    auto binom = [](int n, int k) {
        if (k < 0 || k > n) return 0.0;
        double b = 1;
        for (int j = 1; j <= k; ++j) b = b * (n - k + j) / j;
        return b;
    };
    double total = 0;
    for (int k = 1; k <= std::min(d, r); ++k) total += std::pow(2.0, k) * binom(d, k) * binom(r - 1, k - 1);
    return total;
}

namespace detail {

inline void requireTorus(const Geometry& g, const char* what) {
    if (g.mode() != BoundaryMode::Periodic) throw std::invalid_argument(std::string(what) + " needs a periodic lattice");
}

/// Displacements with l1 norm r, one representative of each {v, -v} pair
/// (first non-zero coordinate positive).
inline std::vector<std::vector<std::vector<int>>> halfShells(int d, int maxNorm) {
    std::vector<std::vector<std::vector<int>>> shells(maxNorm + 1);
    std::vector<int> v(d, -maxNorm);
    for (;;) {
        int norm = 0;
        for (int x : v) norm += std::abs(x);
        if (norm <= maxNorm) {
            int first = 0;
            for (int x : v)
                if (x != 0) {
                    first = x;
                    break;
                }
            if (first > 0 || norm == 0) shells[norm].push_back(v);
        }
        int k = d - 1;
        while (k >= 0 && v[k] == maxNorm) v[k--] = -maxNorm;
        if (k < 0) break;
        ++v[k];
    }
    return shells;
}

/// sum_x eta_x eta_{x+v} on the torus, one lattice row (last axis) at a time.
inline std::int64_t pairCount(const Configuration& c, const std::vector<int>& v) {
    const Geometry& g = c.geometry();
    const int d = g.dimension(), L = g.side();
    const auto& occ = c.occupancy();
    auto wrap = [L](int x) { return ((x % L) + L) % L; };
    const int shift = wrap(v[d - 1]);
    std::vector<int> p(d, 0);
    std::int64_t count = 0;
    for (;;) {
        std::size_t rowS = 0, rowT = 0;
        for (int k = 0; k + 1 < d; ++k) {
            rowS += static_cast<std::size_t>(p[k]) * g.stride(k);
            rowT += static_cast<std::size_t>(wrap(p[k] + v[k])) * g.stride(k);
        }
        const std::uint8_t* a = occ.data() + rowS;
        const std::uint8_t* b = occ.data() + rowT;
        for (int x = 0; x < L - shift; ++x) count += a[x] & b[x + shift];
        for (int x = L - shift; x < L; ++x) count += a[x] & b[x + shift - L];
        int k = d - 2;
        while (k >= 0 && ++p[k] == L) p[k--] = 0;
        if (k < 0) break;
    }
    return count;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-point correlation and compressibility

struct CorrelationOptions {
    std::size_t batches = 20;
    std::size_t minSamples = 10;  ///< fewer samples flag the uncertainty
};

/// Per-shell batch means, kept for error propagation into derived quantities.
struct CorrelationBatches {
    std::vector<std::vector<double>> shellPhi;  ///< batch x lag
};

/// phi(r) averaged over samples and translations, centred on the pooled
/// empirical density of the sample set.
inline CorrelationProfile twoPointCorrelation(const std::vector<Configuration>& samples, int maxLag,
                                              const CorrelationOptions& opt = {},
                                              CorrelationBatches* batchesOut = nullptr) {
    if (samples.empty()) throw std::invalid_argument("twoPointCorrelation: no samples");
    const Geometry& g = samples.front().geometry();
    detail::requireTorus(g, "twoPointCorrelation");
    if (maxLag < 0 || 2 * maxLag >= g.side()) throw std::invalid_argument("twoPointCorrelation: need 0 <= maxLag < L/2");
    for (const auto& c : samples)
        if (!(c.geometry() == g)) throw std::invalid_argument("twoPointCorrelation: samples must share one geometry");

    const int d = g.dimension();
    const double V = static_cast<double>(g.volume());
    const std::size_t S = samples.size();
    double nTotal = 0;
    for (const auto& c : samples) nTotal += static_cast<double>(c.particleCount());
    const double rho = nTotal / (V * static_cast<double>(S));
    const double rho2 = rho * rho;

    const auto shells = detail::halfShells(d, maxLag);
    std::vector<std::vector<double>> shellS(S, std::vector<double>(maxLag + 1)), axisS = shellS;
    for (std::size_t s = 0; s < S; ++s) {
        for (int r = 0; r <= maxLag; ++r) {
            std::int64_t shellSum = 0, axisSum = 0;
            for (const auto& v : shells[r]) {
                const std::int64_t cnt = r == 0 ? static_cast<std::int64_t>(samples[s].particleCount())
                                                : detail::pairCount(samples[s], v);
                shellSum += cnt;
                if (r > 0 && std::count(v.begin(), v.end(), 0) == d - 1) axisSum += cnt;
            }
            const double members = r == 0 ? 1.0 : static_cast<double>(shells[r].size());
            shellS[s][r] = static_cast<double>(shellSum) / (members * V) - rho2;
            axisS[s][r] = r == 0 ? shellS[s][r] : static_cast<double>(axisSum) / (d * V) - rho2;
        }
    }

    CorrelationProfile p;
    p.dimension = d;
    p.maxLag = maxLag;
    p.samples = S;
    p.rhoHat = rho;
    p.uncertaintyFlagged = S < std::max<std::size_t>(opt.minSamples, 2);
    p.shellPhi.resize(maxLag + 1);
    p.shellError.resize(maxLag + 1);
    p.axisPhi.resize(maxLag + 1);
    p.axisError.resize(maxLag + 1);
    p.shellSize.resize(maxLag + 1);
    std::vector<double> col(S);
    for (int r = 0; r <= maxLag; ++r) {
        for (std::size_t s = 0; s < S; ++s) col[s] = shellS[s][r];
        auto e = stats::batchMeans(col, opt.batches);
        p.shellPhi[r] = e.value;
        p.shellError[r] = e.error;
        for (std::size_t s = 0; s < S; ++s) col[s] = axisS[s][r];
        e = stats::batchMeans(col, opt.batches);
        p.axisPhi[r] = e.value;
        p.axisError[r] = e.error;
        p.shellSize[r] = latticeShellSize(d, r);
    }
    if (batchesOut) {
        const std::size_t B = std::min(opt.batches, S), per = S / B;
        batchesOut->shellPhi.assign(B, std::vector<double>(maxLag + 1, 0.0));
        for (std::size_t b = 0; b < B; ++b)
            for (int r = 0; r <= maxLag; ++r) {
                double acc = 0;
                for (std::size_t s = b * per; s < (b + 1) * per; ++s) acc += shellS[s][r];
                batchesOut->shellPhi[b][r] = acc / static_cast<double>(per);
            }
    }
    return p;
}

struct CompressibilityEstimate {
    Estimate chi;
    double truncatedSum = 0;
    double tail = 0;
    int cutoff = 0;
    std::optional<Estimate> xiCross;
    bool nonDecaying = false;  ///< no usable decay, or cutoff inside the correlation length
};

namespace detail {

inline double correlationSum(const std::vector<double>& shellPhi, const std::vector<double>& shellSize, int cutoff,
                             const std::optional<DecayFit>& decay, int d, double* tailOut = nullptr) {
    double sum = 0;
    for (int r = 0; r <= cutoff; ++r) sum += shellSize[r] * shellPhi[r];
    double tail = 0;
    if (decay) {
        for (int r = cutoff + 1;; ++r) {
            const double term = latticeShellSize(d, r) * decay->model(r);
            tail += term;
            if (std::abs(term) < 1e-14 || r > cutoff + 10000) break;
        }
    }
    if (tailOut) *tailOut = tail;
    return sum + tail;
}

}  // namespace detail

/// chi = sum over ||r||_1 <= cutoff of phi(r), plus the fitted exponential
/// tail beyond. The default cutoff is 6 xi_cross.
inline CompressibilityEstimate compressibilityFromCorrelations(const CorrelationProfile& p,
                                                               std::optional<int> cutoff = std::nullopt,
                                                               const CorrelationBatches* batches = nullptr) {
    CompressibilityEstimate out;
    std::optional<DecayFit> decay;
    try {
        decay = xiCrossFit(p, 2, p.maxLag);
        out.xiCross = decay->xi;
    } catch (const std::invalid_argument&) {
        out.nonDecaying = true;
    }
    int c = cutoff ? *cutoff : (decay ? static_cast<int>(std::ceil(6 * decay->xi.value)) : p.maxLag);
    if (c > p.maxLag) {
        c = p.maxLag;
        if (!cutoff) out.nonDecaying = true;
    }
    if (c < 0) throw std::invalid_argument("compressibility cutoff must be non-negative");
    if (decay && c < 3 * decay->xi.value) out.nonDecaying = true;
    out.cutoff = c;
    out.truncatedSum = detail::correlationSum(p.shellPhi, p.shellSize, c, std::nullopt, p.dimension);
    out.chi.value = detail::correlationSum(p.shellPhi, p.shellSize, c, decay, p.dimension, &out.tail);

    if (batches && batches->shellPhi.size() >= 2) {
        std::vector<double> per;
        for (const auto& b : batches->shellPhi) per.push_back(detail::correlationSum(b, p.shellSize, c, decay, p.dimension));
        out.chi.error = stats::meanStderr(per).error;
    } else {
        double var = 0;
        for (int r = 0; r <= c; ++r) var += std::pow(p.shellSize[r] * p.shellError[r], 2);
        out.chi.error = std::sqrt(var);  // treats lags as independent
    }
    return out;
}

// ---------------------------------------------------------------------------
// Box variance and hyperuniformity

struct BoxVariancePoint {
    int R;
    double variance, error;
    double perSite, perSiteError;  ///< variance / R^d
};

struct BoxRegion {
    int lo = 0;    ///< 0-based first position on every axis
    int side = 0;  ///< boxes must fit in [lo, lo + side)^d
};

struct BoxVarianceOptions {
    std::size_t positions = 0;  ///< 0: every box position; k > 0: k random positions per sample
    std::uint64_t seed = 0;
    /// Divide by (1 - R^d / L^d), the fixed-particle-number deficit on a torus.
    bool finiteVolumeCorrection = false;
    std::optional<BoxRegion> region;  ///< restrict boxes to a sub-cube, no wraparound
    std::size_t batches = 20;
};

struct BoxVarianceResult {
    std::vector<BoxVariancePoint> curve;
    bool plateau = false;
    Estimate chi;            ///< plateau value, when a plateau exists
    double surface = 0;      ///< b in Var / R^d = chi + b / R
    int plateauMin = 0, plateauMax = 0;
};

namespace detail {

/// Particle counts of every box [x, x + R)^d, via one running-window pass per
/// axis. `side` is the cube side of `field`; with wrap the windows are
/// periodic, otherwise only fully contained boxes are returned.
inline std::vector<std::int64_t> boxCounts(std::vector<std::int64_t> field, int d, int side, int R, bool wrap) {
    std::vector<int> extent(d, side);
    for (int axis = 0; axis < d; ++axis) {
        const int out = wrap ? side : side - R + 1;
        if (out <= 0) return {};
        std::vector<int> newExtent = extent;
        newExtent[axis] = out;
        std::size_t total = 1;
        for (int e : newExtent) total *= static_cast<std::size_t>(e);
        std::vector<std::int64_t> next(total);
        // strides for the old and new layouts (row-major, axis 0 slowest)
        std::vector<std::size_t> so(d, 1), sn(d, 1);
        for (int k = d - 2; k >= 0; --k) {
            so[k] = so[k + 1] * static_cast<std::size_t>(extent[k + 1]);
            sn[k] = sn[k + 1] * static_cast<std::size_t>(newExtent[k + 1]);
        }
        const std::size_t lines = total / static_cast<std::size_t>(out);
        for (std::size_t line = 0; line < lines; ++line) {
            // decode the line's coordinates on the other axes
            std::size_t rem = line, oldBase = 0, newBase = 0;
            for (int k = d - 1; k >= 0; --k) {
                if (k == axis) continue;
                const std::size_t pos = rem % static_cast<std::size_t>(extent[k]);
                rem /= static_cast<std::size_t>(extent[k]);
                oldBase += pos * so[k];
                newBase += pos * sn[k];
            }
            const int len = extent[axis];
            auto at = [&](int p) { return field[oldBase + static_cast<std::size_t>(p) * so[axis]]; };
            std::int64_t run = 0;
            for (int p = 0; p < R; ++p) run += at(wrap ? p % len : p);
            for (int x = 0; x < out; ++x) {
                next[newBase + static_cast<std::size_t>(x) * sn[axis]] = run;
                const int leave = x, enter = x + R;
                run -= at(leave);
                if (x + 1 < out) run += at(wrap ? enter % len : enter);
            }
        }
        field = std::move(next);
        extent = newExtent;
    }
    return field;
}

}  // namespace detail

/// Variance of the particle number in boxes of side R. chi is the intercept of
/// variance / R^d against 1/R over the largest decade of box sizes, which
/// strips the surface term of short-range correlations.
inline BoxVarianceResult compressibilityFromBoxVariance(const std::vector<Configuration>& samples, std::vector<int> boxSizes,
                                                        const BoxVarianceOptions& opt = {}) {
    if (samples.empty()) throw std::invalid_argument("box variance: no samples");
    if (boxSizes.empty()) throw std::invalid_argument("box variance: no box sizes");
    std::sort(boxSizes.begin(), boxSizes.end());
    const Geometry& g = samples.front().geometry();
    const int d = g.dimension();
    const bool wrap = !opt.region;
    if (wrap) detail::requireTorus(g, "box variance without a region");
    const int side = opt.region ? opt.region->side : g.side();
    const int lo = opt.region ? opt.region->lo : 0;
    if (opt.region && (lo < 0 || lo + side > g.side())) throw std::invalid_argument("box region outside the lattice");
    if (boxSizes.front() < 1 || boxSizes.back() > side) throw std::invalid_argument("box sizes must lie in [1, region side]");

    const std::size_t S = samples.size();
    const std::size_t B = std::min(opt.batches, S);
    const std::size_t nR = boxSizes.size();
    // per batch and R: sum N, sum N^2, box count
    struct Acc { double s1 = 0, s2 = 0, n = 0; };
    std::vector<std::vector<Acc>> acc(B, std::vector<Acc>(nR));
    Rng rng(opt.seed);

    for (std::size_t s = 0; s < S; ++s) {
        const auto& c = samples[s];
        if (!(c.geometry() == g)) throw std::invalid_argument("box variance: samples must share one geometry");
        std::size_t sub = 1;
        for (int k = 0; k < d; ++k) sub *= static_cast<std::size_t>(side);
        std::vector<std::int64_t> field(sub);
        for (std::size_t f = 0; f < sub; ++f) {
            std::size_t rem = f, site = 0;
            for (int k = d - 1; k >= 0; --k) {
                site += (rem % static_cast<std::size_t>(side) + static_cast<std::size_t>(lo)) * g.stride(k);
                rem /= static_cast<std::size_t>(side);
            }
            field[f] = c.occupied(static_cast<Site>(site));
        }
        const std::size_t b = std::min(s / std::max<std::size_t>(S / B, 1), B - 1);
        for (std::size_t k = 0; k < nR; ++k) {
            const auto counts = detail::boxCounts(field, d, side, boxSizes[k], wrap);
            auto add = [&](std::int64_t x) {
                acc[b][k].s1 += static_cast<double>(x);
                acc[b][k].s2 += static_cast<double>(x) * static_cast<double>(x);
                acc[b][k].n += 1;
            };
            if (opt.positions == 0 || counts.empty())
                for (auto x : counts) add(x);
            else
                for (std::size_t q = 0; q < opt.positions; ++q) add(counts[rng.index(counts.size())]);
        }
    }

    const double V = static_cast<double>(g.volume());
    auto varianceOf = [&](std::size_t k, std::size_t skip) {
        Acc t;
        for (std::size_t b = 0; b < B; ++b) {
            if (b == skip) continue;
            t.s1 += acc[b][k].s1;
            t.s2 += acc[b][k].s2;
            t.n += acc[b][k].n;
        }
        const double m = t.s1 / t.n;
        return t.s2 / t.n - m * m;
    };
    auto perSiteOf = [&](std::size_t k, double var) {
        const double vol = std::pow(static_cast<double>(boxSizes[k]), d);
        double v = var / vol;
        if (opt.finiteVolumeCorrection) v /= (1 - vol / V);
        return v;
    };

    BoxVarianceResult res;
    for (std::size_t k = 0; k < nR; ++k) {
        const double var = varianceOf(k, B);
        const auto e = stats::jackknife(B, var, [&](std::size_t skip) { return varianceOf(k, skip); });
        const double ps = perSiteOf(k, var);
        res.curve.push_back({boxSizes[k], var, e.error, ps, ps / var * e.error});
    }

    // plateau over the largest decade, with the boundary term of short-range
    // correlations removed: Var / R^d = chi + b / R
    const int rMax = boxSizes.back();
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < nR; ++k)
        if (10 * boxSizes[k] >= rMax) idx.push_back(k);
    auto plateauFit = [&](std::size_t skip) {
        std::vector<double> x, y, w;
        for (auto k : idx) {
            x.push_back(1.0 / boxSizes[k]);
            y.push_back(perSiteOf(k, varianceOf(k, skip)));
            const double e = res.curve[k].perSiteError;
            w.push_back((e > 0 && std::isfinite(e)) ? 1 / (e * e) : 1.0);
        }
        return stats::linearFit(x, y, w);
    };
    if (idx.size() >= 3) {
        res.plateauMin = boxSizes[idx.front()];
        res.plateauMax = rMax;
        const auto fit = plateauFit(B);
        res.surface = fit.slope;
        res.chi = stats::jackknife(B, fit.intercept, [&](std::size_t skip) { return plateauFit(skip).intercept; });
        const bool resolved = !std::isfinite(res.chi.error) || res.chi.value > 3 * res.chi.error;
        res.plateau = res.chi.value > 0 && resolved && std::abs(fit.slope) / res.plateauMin <= 0.5 * res.chi.value;
    }
    return res;
}

struct HyperuniformityFit {
    Estimate zeta;
    std::size_t used = 0;
    bool withinBound = true;  ///< zeta <= d/2 within 3 sigma
};

/// zeta from Var(R) ~ R^(2 zeta): half the log-log slope. Points with zero
/// variance are left out.
inline HyperuniformityFit hyperuniformityExponent(const std::vector<BoxVariancePoint>& curve, int d) {
    std::vector<double> lx, ly;
    for (const auto& p : curve)
        if (p.variance > 0) {
            lx.push_back(std::log(static_cast<double>(p.R)));
            ly.push_back(std::log(p.variance));
        }
    if (lx.size() < 5) throw std::invalid_argument("hyperuniformity: need at least 5 box sizes with positive variance");
    const double span = *std::max_element(lx.begin(), lx.end()) - *std::min_element(lx.begin(), lx.end());
    if (span < std::log(10.0) - 1e-12) throw std::invalid_argument("hyperuniformity: box sizes must span at least one decade");
    const auto fit = stats::linearFit(lx, ly);
    HyperuniformityFit out;
    out.used = lx.size();
    out.zeta = {fit.slope / 2, fit.slopeError / 2};
    out.withinBound = out.zeta.value <= d / 2.0 + 3 * out.zeta.error + 1e-12;
    return out;
}

// ---------------------------------------------------------------------------
// Conductivity

struct ConductivityEstimate {
    Estimate fromActivity;   ///< time average of c_{i,i'} over edges, halved
    Estimate fromCrossings;  ///< realized jumps per edge per unit time, halved
};

/// sigma from per-window trajectory integrals. The mean of c over edges is
/// (allowed ordered jumps) / (edges), and each jump crosses one edge.
inline ConductivityEstimate conductivityEstimate(const std::vector<TrajectoryIntegrals>& windows, const Geometry& g) {
    if (windows.empty()) throw std::invalid_argument("conductivity: no windows");
    const double E = static_cast<double>(latticeEdgeCount(g));
    std::vector<double> act, cross;
    for (const auto& w : windows) {
        if (!(w.duration > 0)) continue;
        act.push_back(w.activeEdges / (w.duration * E) / 2);
        cross.push_back(static_cast<double>(w.jumps) / (w.duration * E) / 2);
    }
    if (act.empty()) return {{0, 0}, {0, 0}};
    return {stats::batchMeans(act), stats::batchMeans(cross)};
}

// ---------------------------------------------------------------------------
// Space-time correlation

/// psi(t, i_1): correlation between the occupation at time s + t and
/// displacement i along axis 1, summed over the remaining axes.
struct SpaceTimeCorrelation {
    double spacing = 1;  ///< time between consecutive snapshots
    int maxTimeLag = 0;  ///< in snapshots
    int maxDistance = 0;
    std::size_t snapshots = 0;
    double rhoHat = 0;
    std::vector<std::vector<double>> psi, psiError;      ///< [t][i + maxDistance]
    std::vector<std::vector<std::vector<double>>> batchPsi;  ///< [batch][t][i + maxDistance]
    std::vector<Estimate> mass;                           ///< sum_i psi(t, i)
    bool insufficient = false;

    double at(int t, int i) const { return psi[t][i + maxDistance]; }
};

/// Streaming estimator fed with equally spaced snapshots. Correlations are
/// accumulated in Fourier space and folded back per batch of time origins.
class SpaceTimeAccumulator {
public:
    SpaceTimeAccumulator(const Geometry& g, int maxTimeLag, int maxDistance, std::size_t batchLength = 200)
        : L_(g.side()), V_(static_cast<double>(g.volume())), T_(maxTimeLag), M_(maxDistance), batchLength_(batchLength) {
        detail::requireTorus(g, "spaceTimeCorrelation");
        if (2 * M_ >= L_) throw std::invalid_argument("spaceTimeCorrelation: maxDistance must be below L/2");
        if (T_ < 0) throw std::invalid_argument("spaceTimeCorrelation: negative time lag");
        geom_ = g;
        openBatch();
    }

    void add(const Configuration& c) {
        if (!(c.geometry() == geom_)) throw std::invalid_argument("spaceTimeCorrelation: geometry mismatch");
        std::vector<double> col(L_, 0.0);
        const auto& occ = c.occupancy();
        for (Site s = 0; s < occ.size(); ++s)
            if (occ[s]) col[geom_.axisPosition(s, 0)] += 1;
        const double m = static_cast<double>(c.particleCount()) / L_;
        for (auto& x : col) x -= m;
        std::vector<std::complex<double>> spec;
        fft_.fwd(spec, col);
        history_.push_front({std::move(spec), m});
        if (history_.size() > static_cast<std::size_t>(T_) + 1) history_.pop_back();
        const auto& now = history_.front();
        for (int t = 0; t < static_cast<int>(history_.size()); ++t) {
            const auto& origin = history_[t];
            auto& acc = cur_.cross[t];
            for (int k = 0; k < L_; ++k) acc[k] += std::conj(origin.spectrum[k]) * now.spectrum[k];
            cur_.count[t] += 1;
            cur_.mm[t] += origin.mean * now.mean;
            cur_.ma[t] += origin.mean;
            cur_.mb[t] += now.mean;
        }
        meanSum_ += m;
        ++snapshots_;
        if (++inBatch_ == batchLength_) {
            closeBatch();
            openBatch();
        }
    }

    SpaceTimeCorrelation result(double spacing = 1) const {
        auto closed = closed_;
        if (inBatch_ > 0) closed.push_back(fold(cur_));
        SpaceTimeCorrelation out;
        out.spacing = spacing;
        out.maxTimeLag = T_;
        out.maxDistance = M_;
        out.snapshots = snapshots_;
        const double rc = snapshots_ ? meanSum_ / static_cast<double>(snapshots_) : 0.0;  // pooled column mean
        out.rhoHat = rc * L_ / V_;
        const int W = 2 * M_ + 1;
        for (const auto& b : closed) {
            std::vector<std::vector<double>> psi(T_ + 1, std::vector<double>(W, std::numeric_limits<double>::quiet_NaN()));
            for (int t = 0; t <= T_; ++t) {
                if (b.count[t] == 0) continue;
                const double n = b.count[t];
                const double meanTerm = L_ * (b.mm[t] / n - rc * (b.ma[t] + b.mb[t]) / n + rc * rc);
                for (int w = 0; w < W; ++w) psi[t][w] = (b.corr[t][w] + meanTerm) / V_;
            }
            out.batchPsi.push_back(std::move(psi));
        }
        out.insufficient = snapshots_ < static_cast<std::size_t>(T_) + 2 || closed.size() < 2;
        out.psi.assign(T_ + 1, std::vector<double>(W, std::numeric_limits<double>::quiet_NaN()));
        out.psiError = out.psi;
        out.mass.resize(T_ + 1);
        for (int t = 0; t <= T_; ++t) {
            // pair-count weighted mean, batch-to-batch scatter for the error
            double totalCount = 0;
            for (const auto& b : closed) totalCount += b.count[t];
            if (totalCount == 0) continue;
            std::vector<double> masses;
            for (int w = 0; w < W; ++w) {
                double acc = 0;
                std::vector<double> vals;
                for (std::size_t bi = 0; bi < closed.size(); ++bi) {
                    if (closed[bi].count[t] == 0) continue;
                    acc += out.batchPsi[bi][t][w] * closed[bi].count[t];
                    vals.push_back(out.batchPsi[bi][t][w]);
                }
                out.psi[t][w] = acc / totalCount;
                out.psiError[t][w] = vals.size() >= 2 ? stats::meanStderr(vals).error : std::numeric_limits<double>::quiet_NaN();
            }
            for (std::size_t bi = 0; bi < closed.size(); ++bi) {
                if (closed[bi].count[t] == 0) continue;
                double s = 0;
                for (int w = 0; w < W; ++w) s += out.batchPsi[bi][t][w];
                masses.push_back(s);
            }
            double s = 0;
            for (int w = 0; w < W; ++w) s += out.psi[t][w];
            out.mass[t] = {s, masses.size() >= 2 ? stats::meanStderr(masses).error : std::numeric_limits<double>::quiet_NaN()};
        }
        return out;
    }

private:
    struct Spectrum {
        std::vector<std::complex<double>> spectrum;
        double mean;
    };
    struct OpenBatch {
        std::vector<std::vector<std::complex<double>>> cross;
        std::vector<double> count, mm, ma, mb;
    };
    struct ClosedBatch {
        std::vector<std::vector<double>> corr;  ///< [t][i + M], centred part, per pair
        std::vector<double> count, mm, ma, mb;
    };

    void openBatch() {
        cur_.cross.assign(T_ + 1, std::vector<std::complex<double>>(L_));
        cur_.count.assign(T_ + 1, 0);
        cur_.mm.assign(T_ + 1, 0);
        cur_.ma.assign(T_ + 1, 0);
        cur_.mb.assign(T_ + 1, 0);
        inBatch_ = 0;
    }

    ClosedBatch fold(const OpenBatch& b) const {
        ClosedBatch c;
        c.count = b.count;
        c.mm = b.mm;
        c.ma = b.ma;
        c.mb = b.mb;
        c.corr.assign(T_ + 1, std::vector<double>(2 * M_ + 1, 0.0));
        Eigen::FFT<double> fft;
        for (int t = 0; t <= T_; ++t) {
            if (b.count[t] == 0) continue;
            std::vector<std::complex<double>> spec = b.cross[t];
            std::vector<std::complex<double>> back;
            fft.inv(back, spec);
            for (int i = -M_; i <= M_; ++i) c.corr[t][i + M_] = back[(i + L_) % L_].real() / b.count[t];
        }
        return c;
    }

    void closeBatch() { closed_.push_back(fold(cur_)); }

    int L_;
    double V_;
    int T_, M_;
    std::size_t batchLength_;
    Geometry geom_{1, 2};
    Eigen::FFT<double> fft_;
    std::deque<Spectrum> history_;
    OpenBatch cur_;
    std::vector<ClosedBatch> closed_;
    std::size_t inBatch_ = 0;
    std::size_t snapshots_ = 0;
    double meanSum_ = 0;
};

inline SpaceTimeCorrelation spaceTimeCorrelation(const std::vector<Configuration>& trajectory, int maxTimeLag, int maxDistance,
                                                 double spacing = 1, std::size_t batchLength = 200) {
    if (trajectory.empty()) throw std::invalid_argument("spaceTimeCorrelation: empty trajectory");
    SpaceTimeAccumulator acc(trajectory.front().geometry(), maxTimeLag, maxDistance, batchLength);
    for (const auto& c : trajectory) acc.add(c);
    return acc.result(spacing);
}

struct EinsteinCheck {
    std::vector<double> t, lhs, lhsError;
    Estimate slope;
    double expected = 0;
    double relativeDeviation = 0;
    /// max over t of |mass(t) - mass(0)| / combined error
    double massDriftSigmas = 0;
    bool leakage = false;  ///< mass drift beyond 5 combined errors
};

/// sum_{|i| <= cutoff} i^2 [psi(t,i) - psi(0,i)] and its slope in t over
/// [tMin, tMax], compared with `expectedSlope`.
inline EinsteinCheck einsteinSpreadingCheck(const SpaceTimeCorrelation& st, double tMin, double tMax, int cutoff,
                                            double expectedSlope) {
    if (cutoff > st.maxDistance) throw std::invalid_argument("einstein check: cutoff beyond computed distances");
    auto lhsOf = [&](const std::vector<std::vector<double>>& psi, int t) {
        double s = 0;
        for (int i = -cutoff; i <= cutoff; ++i) s += static_cast<double>(i) * i * (psi[t][i + st.maxDistance] - psi[0][i + st.maxDistance]);
        return s;
    };
    EinsteinCheck out;
    out.expected = expectedSlope;
    const std::size_t B = st.batchPsi.size();
    std::vector<double> ft, fy;
    for (int t = 0; t <= st.maxTimeLag; ++t) {
        const double time = t * st.spacing;
        out.t.push_back(time);
        out.lhs.push_back(lhsOf(st.psi, t));
        std::vector<double> per;
        for (const auto& b : st.batchPsi)
            if (std::isfinite(b[t][0])) per.push_back(lhsOf(b, t));
        out.lhsError.push_back(per.size() >= 2 ? stats::meanStderr(per).error : std::numeric_limits<double>::quiet_NaN());
        if (time >= tMin - 1e-12 && time <= tMax + 1e-12) {
            ft.push_back(time);
            fy.push_back(out.lhs.back());
        }
        const double e = std::hypot(st.mass[t].error, st.mass[0].error);
        if (t > 0 && e > 0) out.massDriftSigmas = std::max(out.massDriftSigmas, std::abs(st.mass[t].value - st.mass[0].value) / e);
    }
    if (ft.size() < 2) throw std::invalid_argument("einstein check: fewer than two lags in the time window");
    const auto fit = stats::linearFit(ft, fy);
    out.slope.value = fit.slope;
    if (B >= 2) {
        std::vector<double> slopes;
        for (const auto& b : st.batchPsi) {
            std::vector<double> y;
            for (double time : ft) y.push_back(lhsOf(b, static_cast<int>(std::lround(time / st.spacing))));
            slopes.push_back(stats::linearFit(ft, y).slope);
        }
        out.slope.error = stats::meanStderr(slopes).error;
    } else {
        out.slope.error = fit.slopeError;
    }
    out.relativeDeviation = expectedSlope != 0 ? (out.slope.value - expectedSlope) / expectedSlope : 0.0;
    out.leakage = out.massDriftSigmas > 5;
    return out;
}

}  // namespace clg
