#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "clg/lattice.hpp"
#include "clg/simulation.hpp"
#include "clg/stats.hpp"

namespace clg {

/// Weight of the reservoir term at a boundary site. The dynamics resamples
/// each boundary site at rate 1, whatever its number of mirror neighbours;
/// the per-neighbour reading counts every mirror neighbour separately. The
/// two only differ at sites with several mirror neighbours (open-box edges
/// and corners).
enum class MirrorWeight {
    PerMirrorNeighbour,
    PerBoundarySite,
};

inline double mirrorWeight(const Geometry& g, Site s, MirrorWeight w) {
    const int m = g.mirrorCount(s);
    if (m == 0) return 0;
    return w == MirrorWeight::PerMirrorNeighbour ? m : 1.0;
}

struct DirichletSolution {
    std::vector<double> values;  ///< per site
    double residual = 0;         ///< max-norm of the discrete Laplacian
    int iterations = 0;
    double alphaMin = 0, alphaMax = 0;

    bool satisfiesMaximumPrinciple(double slack = 1e-12) const {
        return std::all_of(values.begin(), values.end(),
                           [&](double v) { return v >= alphaMin - slack && v <= alphaMax + slack; });
    }
};

/// alpha(i) of every site, 0 off the boundary.
inline std::vector<double> boundaryValues(const Geometry& g, const BoundarySpec& b) {
    std::vector<double> a(g.volume(), 0.0);
    const auto& bs = g.boundarySites();
    for (std::size_t k = 0; k < bs.size(); ++k) a[bs[k]] = b.alpha[k];
    return a;
}

/// sum_{j ~ i} (u_j - u_i) with mirror neighbours carrying alpha(i).
inline std::vector<double> harmonicResidual(const Geometry& g, const BoundarySpec& b, const std::vector<double>& u,
                                            MirrorWeight w = MirrorWeight::PerMirrorNeighbour) {
    const auto alpha = boundaryValues(g, b);
    std::vector<double> r(g.volume(), 0.0);
    for (Site s = 0; s < g.volume(); ++s) {
        double acc = 0;
        for (int k = 0; k < g.degree(); ++k) {
            const Site j = g.neighbor(s, k);
            if (j != kMirror) acc += u[j] - u[s];
        }
        acc += mirrorWeight(g, s, w) * (alpha[s] - u[s]);
        r[s] = acc;
    }
    return r;
}

/// Sparse system (deg_in + m_i) u_i - sum_j u_j = m_i alpha_i.
inline Eigen::SparseMatrix<double> dirichletMatrix(const Geometry& g, MirrorWeight w) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(g.volume() * (g.degree() + 1));
    for (Site s = 0; s < g.volume(); ++s) {
        double diag = mirrorWeight(g, s, w);
        for (int k = 0; k < g.degree(); ++k) {
            const Site j = g.neighbor(s, k);
            if (j == kMirror) continue;
            diag += 1;
            t.emplace_back(s, j, -1.0);
        }
        t.emplace_back(s, s, diag);
    }
    const auto n = static_cast<Eigen::Index>(g.volume());
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

/// Conjugate-gradient solve of the discrete Dirichlet problem. Throws with the
/// reached residual when `maxIterations` is not enough.
inline DirichletSolution dirichletSolve(const Geometry& g, const BoundarySpec& b, double tol = 1e-12,
                                        int maxIterations = 100000,
                                        MirrorWeight w = MirrorWeight::PerMirrorNeighbour) {
    b.validate(g);
    const auto A = dirichletMatrix(g, w);
    const auto alpha = boundaryValues(g, b);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(g.volume()));
    for (Site s = 0; s < g.volume(); ++s) rhs[s] = mirrorWeight(g, s, w) * alpha[s];

    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setMaxIterations(maxIterations);
    // Eigen's tolerance is relative to |rhs|; aim below the requested absolute one
    cg.setTolerance(std::max(tol / std::max(rhs.norm(), 1.0) * 1e-2, 1e-16));
    cg.compute(A);
    Eigen::VectorXd u = cg.solve(rhs);

    DirichletSolution out;
    out.values.assign(u.data(), u.data() + u.size());
    out.iterations = static_cast<int>(cg.iterations());
    const auto r = harmonicResidual(g, b, out.values, w);
    for (double x : r) out.residual = std::max(out.residual, std::abs(x));
    out.alphaMin = *std::min_element(b.alpha.begin(), b.alpha.end());
    out.alphaMax = *std::max_element(b.alpha.begin(), b.alpha.end());
    if (!(out.residual < tol))
        throw std::runtime_error("Dirichlet solver did not converge: residual " + std::to_string(out.residual) +
                                 " after " + std::to_string(out.iterations) + " iterations");
    return out;
}

/// alpha_l + (alpha_r - alpha_l) i_1 / (L + 1) for the left/right cylinder.
inline double linearProfile(double left, double right, int L, int i1) {
    return left + (right - left) * static_cast<double>(i1) / (L + 1);
}

// ---------------------------------------------------------------------------
// Simulation of the reservoir-driven system

struct BoundaryRunOptions {
    double burnIn = -1;  ///< time units; negative means 20 L^2
    int windows = 20;
    double windowTime = 1000;
    double sampleInterval = 10;  ///< spacing of the current trace
    std::optional<Configuration> initial;  ///< defaults to an empty box
};

struct StationaryProfile {
    std::vector<double> mean, error;              ///< time-averaged A_i per site
    std::vector<double> columnMean, columnError;  ///< averaged over sites with equal i_1
    /// Mean net current per edge from column c to c + 1 (0-based c), per unit time.
    std::vector<double> cutCurrent, cutCurrentError;
    /// Column difference rho_a(c) - rho_a(c + 1), with per-window errors.
    std::vector<double> cutGradient, cutGradientError;
    /// Discrete Laplacian of the measured profile with mirror data, and its error.
    std::vector<double> residual, residualError;
    /// max over columns of |first half - second half| / combined error
    double driftSigmas = 0;
    std::vector<std::vector<double>> windowValues;  ///< [window][site]
};

struct CurrentLedger {
    std::vector<double> t;
    std::vector<long long> jLeft;   ///< entering at i_1 = 1 counts +1
    std::vector<long long> jRight;  ///< exiting at i_1 = L counts +1
    double K = 0;                   ///< L / (L + 1)
    Estimate slopeLeft, slopeRight;  ///< least-squares slope, batch error
    Estimate cutFlow;               ///< net left-to-right jumps per unit time, averaged over cuts
};

struct BoundaryRunResult {
    StationaryProfile profile;
    CurrentLedger current;
    std::uint64_t events = 0;
    double measuredTime = 0;
};

/// Burn in, then follow the trajectory over `windows` windows, integrating
/// A_i per site and counting reservoir exchanges and bulk cut crossings.
inline BoundaryRunResult runBoundaryDriven(const GeometryPtr& g, const BoundarySpec& b, std::uint64_t seed,
                                           const BoundaryRunOptions& opt = {},
                                           MirrorWeight residualWeight = MirrorWeight::PerMirrorNeighbour) {
    if (g->mode() == BoundaryMode::Periodic) throw std::invalid_argument("reservoir dynamics needs an open axis");
    if (opt.windows < 2) throw std::invalid_argument("need at least two measurement windows");
    const int L = g->side();
    const std::size_t V = g->volume();
    Simulation sim(opt.initial ? *opt.initial : Configuration(g), seed, b);
    const double burn = opt.burnIn < 0 ? 20.0 * L * L : opt.burnIn;
    sim.runUntil({burn, std::numeric_limits<std::uint64_t>::max(), false});
    const double t0 = sim.clock();

    // lazy per-site integrals of A_i
    std::vector<std::uint8_t> cachedA(V);
    std::vector<double> last(V, t0), acc(V, 0.0);
    for (Site s = 0; s < V; ++s) cachedA[s] = sim.config().active(s);
    auto touch = [&](const Configuration& c, Site s, double t) {
        const std::uint8_t a = c.active(s);
        if (a == cachedA[s]) return;
        acc[s] += cachedA[s] * (t - last[s]);
        last[s] = t;
        cachedA[s] = a;
    };
    auto touchAround = [&](const Configuration& c, Site s, double t) {
        touch(c, s, t);
        for (int k = 0; k < g->degree(); ++k) {
            const Site n = g->neighbor(s, k);
            if (n != kMirror) touch(c, n, t);
        }
    };

    const bool lr = g->axisIsOpen(0);
    long long jl = 0, jr = 0;
    std::vector<long long> cut(std::max(L - 1, 0), 0);
    BoundaryRunResult res;
    auto& prof = res.profile;
    auto& cur = res.current;
    cur.K = static_cast<double>(L) / (L + 1);
    std::vector<std::vector<double>> cutPerWindow;  // [window][cut], per edge per unit time
    std::vector<double> leftRate, rightRate, flowRate;
    double nextSample = t0;
    const double transverse = static_cast<double>(V) / L;

    const std::uint64_t eventsBefore = sim.eventCount();
    for (int w = 0; w < opt.windows; ++w) {
        const double wStart = sim.clock(), wEnd = wStart + opt.windowTime;
        const long long jl0 = jl, jr0 = jr;
        std::fill(cut.begin(), cut.end(), 0);
        auto observer = [&](const Event& e, const Simulation& s) {
            while (nextSample <= e.time) {
                cur.t.push_back(nextSample - t0);
                cur.jLeft.push_back(jl);
                cur.jRight.push_back(jr);
                nextSample += opt.sampleInterval;
            }
            const auto& c = s.config();
            if (e.kind == EventKind::Jump) {
                touchAround(c, e.from, e.time);
                touchAround(c, e.to, e.time);
                if (lr) {
                    const int pf = g->axisPosition(e.from, 0), pt = g->axisPosition(e.to, 0);
                    if (pf != pt) cut[std::min(pf, pt)] += pt > pf ? 1 : -1;
                }
            } else if (e.changed) {
                touchAround(c, e.from, e.time);
                if (lr) {
                    const int p = g->axisPosition(e.from, 0);
                    const int sign = e.newValue ? 1 : -1;
                    if (p == 0) jl += sign;
                    if (p == L - 1) jr -= sign;
                }
            }
        };
        sim.runUntil({wEnd, std::numeric_limits<std::uint64_t>::max(), false}, observer);
        std::vector<double> vals(V);
        for (Site s = 0; s < V; ++s) {
            acc[s] += cachedA[s] * (wEnd - last[s]);
            last[s] = wEnd;
            vals[s] = acc[s] / opt.windowTime;
            acc[s] = 0;
        }
        prof.windowValues.push_back(std::move(vals));
        leftRate.push_back(static_cast<double>(jl - jl0) / opt.windowTime);
        rightRate.push_back(static_cast<double>(jr - jr0) / opt.windowTime);
        std::vector<double> cw(cut.size());
        double flow = 0;
        for (std::size_t k = 0; k < cut.size(); ++k) {
            cw[k] = static_cast<double>(cut[k]) / (opt.windowTime * transverse);
            flow += static_cast<double>(cut[k]) / opt.windowTime;
        }
        flowRate.push_back(cut.empty() ? 0.0 : flow / static_cast<double>(cut.size()));
        cutPerWindow.push_back(std::move(cw));
    }
    res.events = sim.eventCount() - eventsBefore;
    res.measuredTime = sim.clock() - t0;

    // per-site and per-column statistics, windows as batches
    const std::size_t W = prof.windowValues.size();
    std::vector<double> col(W);
    prof.mean.resize(V);
    prof.error.resize(V);
    for (Site s = 0; s < V; ++s) {
        for (std::size_t w = 0; w < W; ++w) col[w] = prof.windowValues[w][s];
        const auto e = stats::meanStderr(col);
        prof.mean[s] = e.value;
        prof.error[s] = e.error;
    }
    std::vector<std::vector<double>> colWin(W, std::vector<double>(L, 0.0));
    for (std::size_t w = 0; w < W; ++w) {
        for (Site s = 0; s < V; ++s) colWin[w][g->axisPosition(s, 0)] += prof.windowValues[w][s];
        for (auto& x : colWin[w]) x /= transverse;
    }
    prof.columnMean.resize(L);
    prof.columnError.resize(L);
    for (int c = 0; c < L; ++c) {
        for (std::size_t w = 0; w < W; ++w) col[w] = colWin[w][c];
        const auto e = stats::meanStderr(col);
        prof.columnMean[c] = e.value;
        prof.columnError[c] = e.error;
        const std::size_t h = W / 2;
        const auto first = stats::meanStderr(std::span<const double>(col).subspan(0, h));
        const auto second = stats::meanStderr(std::span<const double>(col).subspan(h));
        const double comb = std::hypot(first.error, second.error);
        if (comb > 0) prof.driftSigmas = std::max(prof.driftSigmas, std::abs(first.value - second.value) / comb);
    }
    for (std::size_t k = 0; k < cut.size(); ++k) {
        for (std::size_t w = 0; w < W; ++w) col[w] = cutPerWindow[w][k];
        auto e = stats::meanStderr(col);
        prof.cutCurrent.push_back(e.value);
        prof.cutCurrentError.push_back(e.error);
        for (std::size_t w = 0; w < W; ++w) col[w] = colWin[w][k] - colWin[w][k + 1];
        e = stats::meanStderr(col);
        prof.cutGradient.push_back(e.value);
        prof.cutGradientError.push_back(e.error);
    }
    {
        std::vector<std::vector<double>> rw;
        for (const auto& v : prof.windowValues) rw.push_back(harmonicResidual(*g, b, v, residualWeight));
        prof.residual.resize(V);
        prof.residualError.resize(V);
        for (Site s = 0; s < V; ++s) {
            for (std::size_t w = 0; w < W; ++w) col[w] = rw[w][s];
            const auto e = stats::meanStderr(col);
            prof.residual[s] = e.value;
            prof.residualError[s] = e.error;
        }
    }

    auto slopeOf = [&](const std::vector<long long>& j, const std::vector<double>& rates) {
        Estimate e = stats::meanStderr(rates);
        if (j.size() >= 2) {
            std::vector<double> y(j.begin(), j.end());
            e.value = stats::linearFit(cur.t, y).slope;
        }
        return e;
    };
    cur.slopeLeft = slopeOf(cur.jLeft, leftRate);
    cur.slopeRight = slopeOf(cur.jRight, rightRate);
    cur.cutFlow = stats::meanStderr(flowRate);
    return res;
}

inline StationaryProfile measureStationaryProfile(const GeometryPtr& g, const BoundarySpec& b, std::uint64_t seed,
                                                  const BoundaryRunOptions& opt = {}) {
    return runBoundaryDriven(g, b, seed, opt).profile;
}

inline CurrentLedger trackCurrent(const GeometryPtr& g, const BoundarySpec& b, std::uint64_t seed,
                                  const BoundaryRunOptions& opt = {}) {
    if (!(g->mode() == BoundaryMode::Cylinder || (g->mode() == BoundaryMode::OpenBox && g->dimension() == 1)))
        throw std::invalid_argument("current tracking needs a cylinder or a 1D open segment");
    return runBoundaryDriven(g, b, seed, opt).current;
}

}  // namespace clg
