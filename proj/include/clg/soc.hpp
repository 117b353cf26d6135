#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "clg/lattice.hpp"
#include "clg/parallel.hpp"
#include "clg/random.hpp"
#include "clg/simulation.hpp"
#include "clg/stats.hpp"

namespace clg {

/// Spreading of a dense block in an empty periodic box until it freezes.
struct SocOptions {
    int block = 0;                  ///< side m of the initial cube
    std::size_t seeds = 20;
    std::uint64_t rootSeed = 1;
    std::uint64_t eventCap = std::numeric_limits<std::uint64_t>::max();
    double innerFraction = 0.5;     ///< inner window side as a fraction of m
    std::size_t minInnerSites = 64;  ///< smaller windows flag a small sample
    std::size_t threads = 1;
};

struct SocRun {
    std::uint64_t seed = 0;
    bool absorbed = false;
    bool touchedEdge = false;  ///< rejected: a particle reached the outer layer of the box
    double time = 0;
    std::uint64_t events = 0;
    std::size_t innerParticles = 0, innerSites = 0;
    double innerDensity = 0;
    std::optional<Configuration> frozen;

    bool accepted() const { return absorbed && !touchedEdge; }
};

struct SocResult {
    std::vector<SocRun> runs;
    Estimate pooled;  ///< particles / sites over accepted runs; error from the per-run scatter
    std::size_t accepted = 0, rejected = 0, censored = 0;
    bool smallSample = false;
    int innerLo = 0, innerSide = 0;  ///< 0-based window [lo, lo + side)^d
};

inline bool onOuterLayer(const Geometry& g, Site s) {
    for (int k = 0; k < g.dimension(); ++k) {
        const int p = g.axisPosition(s, k);
        if (p == 0 || p == g.side() - 1) return true;
    }
    return false;
}

inline SocResult socSpreadExperiment(const GeometryPtr& g, const SocOptions& opt) {
    if (g->mode() != BoundaryMode::Periodic) throw std::invalid_argument("SOC spreading runs on a periodic box");
    const int L = g->side(), m = opt.block;
    if (m < 1 || m + 2 > L) throw std::invalid_argument("SOC block must fit strictly inside the box");
    SocResult res;
    res.innerSide = std::max(1, static_cast<int>(opt.innerFraction * m));
    res.innerLo = (L - m) / 2 + (m - res.innerSide) / 2;
    const int lo = res.innerLo, side = res.innerSide;
    auto inWindow = [&](Site s) {
        for (int k = 0; k < g->dimension(); ++k) {
            const int p = g->axisPosition(s, k);
            if (p < lo || p >= lo + side) return false;
        }
        return true;
    };
    const Configuration start = initialCondition({InitialKind::CenteredBlock, 0, std::nullopt, m}, g, 0);

    res.runs.resize(opt.seeds);
    parallelFor(opt.seeds, opt.threads, [&](std::size_t k) {
        SocRun run;
        run.seed = splitSeed(opt.rootSeed, k);
        Simulation sim(start, run.seed);
        const auto r = sim.runUntil({std::numeric_limits<double>::infinity(), opt.eventCap, true},
                                    [&](const Event& e, const Simulation&) {
                                        if (onOuterLayer(*g, e.to)) {
                                            run.touchedEdge = true;
                                            return false;
                                        }
                                        return true;
                                    });
        run.absorbed = r.reason == StopReason::Absorbed;
        run.time = sim.clock();
        run.events = r.events;
        for (Site s = 0; s < g->volume(); ++s)
            if (inWindow(s)) {
                ++run.innerSites;
                run.innerParticles += sim.config().occupied(s);
            }
        run.innerDensity = static_cast<double>(run.innerParticles) / static_cast<double>(run.innerSites);
        if (run.absorbed) run.frozen = sim.config();
        res.runs[k] = std::move(run);
    });

    std::vector<double> dens;
    double np = 0, ns = 0;
    for (const auto& r : res.runs) {
        if (r.touchedEdge) ++res.rejected;
        else if (!r.absorbed) ++res.censored;
        if (!r.accepted()) continue;
        ++res.accepted;
        dens.push_back(r.innerDensity);
        np += static_cast<double>(r.innerParticles);
        ns += static_cast<double>(r.innerSites);
    }
    if (!dens.empty()) res.pooled = {np / ns, dens.size() >= 2 ? stats::meanStderr(dens).error : std::numeric_limits<double>::quiet_NaN()};
    const std::size_t windowSites = res.runs.empty() ? 0 : res.runs.front().innerSites;
    res.smallSample = windowSites < opt.minInnerSites || res.accepted < 2;
    return res;
}

}  // namespace clg
