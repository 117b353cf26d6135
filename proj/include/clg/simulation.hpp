#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "clg/exact_1d.hpp"
#include "clg/lattice.hpp"
#include "clg/random.hpp"

namespace clg {

/// Reservoir densities alpha(i) on the boundary sites of an open box or
/// cylinder. Values are stored per entry of Geometry::boundarySites().
struct BoundarySpec {
    std::vector<double> alpha;

    static BoundarySpec uniform(const Geometry& g, double a) {
        BoundarySpec b;
        b.alpha.assign(g.boundarySites().size(), a);
        b.validate(g);
        return b;
    }

    /// alpha_left on the face i_1 = 1, alpha_right on i_1 = L. Only meaningful
    /// when axis 1 is the sole open axis (cylinder, or d = 1 open box).
    static BoundarySpec leftRight(const Geometry& g, double left, double right) {
        if (!(g.mode() == BoundaryMode::Cylinder || (g.mode() == BoundaryMode::OpenBox && g.dimension() == 1)))
            throw std::invalid_argument("left/right reservoirs need a cylinder or a 1D open segment");
        BoundarySpec b;
        for (Site s : g.boundarySites()) b.alpha.push_back(g.axisPosition(s, 0) == 0 ? left : right);
        b.validate(g);
        return b;
    }

    void validate(const Geometry& g) const {
        if (g.mode() == BoundaryMode::Periodic) throw std::invalid_argument("reservoirs need an open axis");
        if (alpha.size() != g.boundarySites().size())
            throw std::invalid_argument("boundary spec must cover every boundary site (" +
                                        std::to_string(g.boundarySites().size()) + " values expected)");
        for (double a : alpha)
            if (!(a > 0 && a < 1)) throw std::invalid_argument("reservoir densities must lie in (0,1)");
    }
};

enum class EventKind { Jump, Resample };

struct Event {
    EventKind kind;
    Site from;             ///< jump source, or the resampled site
    Site to;               ///< jump target (kMirror for resampling)
    bool newValue = true;  ///< resampled occupancy
    bool changed = true;   ///< false for a resample that left the site as it was
    double time;           ///< clock after the event
};

/// Time integrals accumulated along the trajectory.
struct TrajectoryIntegrals {
    double duration = 0;
    double activeEdges = 0;      ///< integral of the allowed-jump count
    double activeParticles = 0;  ///< integral of n_a
    std::uint64_t jumps = 0;
    std::uint64_t resamples = 0;
};

struct StopCondition {
    double time = std::numeric_limits<double>::infinity();
    std::uint64_t maxEvents = std::numeric_limits<std::uint64_t>::max();
    bool onAbsorption = true;
};

enum class StopReason { Time, EventBudget, Absorbed, Observer };

inline const char* toString(StopReason r) {
    switch (r) {
    case StopReason::Time: return "time";
    case StopReason::EventBudget: return "event-budget";
    case StopReason::Absorbed: return "absorbed";
    case StopReason::Observer: return "observer";
    }
    return "?";
}

struct RunResult {
    StopReason reason;
    std::uint64_t events = 0;
};

/// Exact continuous-time simulation of the bulk dynamics, plus rate-1
/// Bernoulli resampling of every boundary site when reservoirs are attached.
class Simulation {
public:
    Simulation(Configuration initial, std::uint64_t seed, std::optional<BoundarySpec> boundary = std::nullopt)
        : config_(std::move(initial)), edges_(allowedJumps(config_)), rng_(seed) {
        const auto& g = config_.geometry();
        if (g.mode() != BoundaryMode::Periodic) {
            if (!boundary) throw std::invalid_argument("open and cylinder geometries need a boundary spec");
            boundary->validate(g);
            boundary_ = std::move(*boundary);
        } else if (boundary) {
            throw std::invalid_argument("periodic geometry takes no boundary spec");
        }
    }

    const Configuration& config() const { return config_; }
    const ActiveEdgeSet& edges() const { return edges_; }
    const Geometry& geometry() const { return config_.geometry(); }
    const std::optional<BoundarySpec>& boundary() const { return boundary_; }
    double clock() const { return clock_; }
    std::uint64_t eventCount() const { return events_; }
    const TrajectoryIntegrals& integrals() const { return integrals_; }
    Rng& rng() { return rng_; }
    const Rng& rng() const { return rng_; }

    std::uint64_t totalRate() const {
        return edges_.size() + (boundary_ ? geometry().boundarySites().size() : 0);
    }
    bool absorbed() const { return totalRate() == 0; }

    /// One event. Returns nullopt, leaving the clock untouched, when absorbed.
    std::optional<Event> step() {
        const std::uint64_t rate = totalRate();
        if (rate == 0) return std::nullopt;
        const double dt = rng_.exponential(static_cast<double>(rate));
        return fire(rate, dt);
    }

    /// Advance until the first satisfied stop condition. `observer(event, sim)`
    /// is called after each event; if it returns bool, false stops the run.
    template <typename Observer>
    RunResult runUntil(const StopCondition& stop, Observer&& observer) {
        RunResult res{StopReason::EventBudget, 0};
        for (;;) {
            if (res.events >= stop.maxEvents) {
                res.reason = StopReason::EventBudget;
                return res;
            }
            const std::uint64_t rate = totalRate();
            if (rate == 0) {
                if (stop.onAbsorption || std::isinf(stop.time)) {
                    res.reason = StopReason::Absorbed;
                    return res;
                }
                accumulate(stop.time - clock_);
                clock_ = stop.time;
                res.reason = StopReason::Time;
                return res;
            }
            const double dt = rng_.exponential(static_cast<double>(rate));
            if (clock_ + dt > stop.time) {
                // memoryless: the pending clock is dropped and redrawn later
                accumulate(stop.time - clock_);
                clock_ = stop.time;
                res.reason = StopReason::Time;
                return res;
            }
            const Event e = fire(rate, dt);
            ++res.events;
            if constexpr (std::is_same_v<std::invoke_result_t<Observer&, const Event&, const Simulation&>, bool>) {
                if (!observer(e, *this)) {
                    res.reason = StopReason::Observer;
                    return res;
                }
            } else {
                observer(e, *this);
            }
        }
    }

    RunResult runUntil(const StopCondition& stop) {
        return runUntil(stop, [](const Event&, const Simulation&) {});
    }

    void resetIntegrals() { integrals_ = {}; }

    /// Used by checkpoint restore.
    void restoreState(double clock, std::uint64_t events, const std::string& rngState, const TrajectoryIntegrals& ti,
                      const std::vector<std::uint32_t>& edgeOrder) {
        edges_.reorder(edgeOrder);
        clock_ = clock;
        events_ = events;
        rng_.restore(rngState);
        integrals_ = ti;
    }

private:
    void accumulate(double dt) {
        integrals_.duration += dt;
        integrals_.activeEdges += static_cast<double>(edges_.size()) * dt;
        integrals_.activeParticles += static_cast<double>(config_.activeCount()) * dt;
    }

    Event fire(std::uint64_t rate, double dt) {
        accumulate(dt);
        clock_ += dt;
        ++events_;
        const std::uint64_t k = rng_.index(rate);
        if (k < edges_.size()) {
            const std::uint32_t id = edges_.idAt(k);
            const int deg = edges_.degree();
            const Site i = ActiveEdgeSet::source(id, deg);
            const Site j = geometry().neighbor(i, ActiveEdgeSet::slot(id, deg));
            config_.set(i, false);
            config_.set(j, true);
            edges_.refreshAround(config_, i);
            edges_.refreshAround(config_, j);
            ++integrals_.jumps;
            return {EventKind::Jump, i, j, true, true, clock_};
        }
        const std::size_t b = k - edges_.size();
        const Site s = geometry().boundarySites()[b];
        const bool v = rng_.bernoulli(boundary_->alpha[b]);
        const bool changed = setSite(config_, edges_, s, v);
        ++integrals_.resamples;
        return {EventKind::Resample, s, kMirror, v, changed, clock_};
    }

    Configuration config_;
    ActiveEdgeSet edges_;
    Rng rng_;
    std::optional<BoundarySpec> boundary_;
    double clock_ = 0;
    std::uint64_t events_ = 0;
    TrajectoryIntegrals integrals_;
};

// ---------------------------------------------------------------------------
// Initial conditions

enum class InitialKind {
    UniformN,          ///< n sites drawn without replacement
    Bernoulli,         ///< product measure at density rho
    Chessboard,        ///< occupied where the coordinate sum is even
    CenteredBlock,     ///< fully occupied m^d cube centred in an empty box
    GrandCanonical1d,  ///< stationary Markov-chain law at density rho
    Stationary1d,      ///< uniform ergodic ring configuration with n particles
};

inline const char* toString(InitialKind k) {
    switch (k) {
    case InitialKind::UniformN: return "uniform";
    case InitialKind::Bernoulli: return "bernoulli";
    case InitialKind::Chessboard: return "chessboard";
    case InitialKind::CenteredBlock: return "block";
    case InitialKind::GrandCanonical1d: return "grand-canonical-1d";
    case InitialKind::Stationary1d: return "stationary-1d";
    }
    return "?";
}

inline InitialKind parseInitialKind(const std::string& s) {
    for (auto k : {InitialKind::UniformN, InitialKind::Bernoulli, InitialKind::Chessboard, InitialKind::CenteredBlock,
                   InitialKind::GrandCanonical1d, InitialKind::Stationary1d})
        if (s == toString(k)) return k;
    throw std::invalid_argument("unknown initial condition '" + s +
                                "' (expected uniform, bernoulli, chessboard, block, grand-canonical-1d, stationary-1d)");
}

struct InitialSpec {
    InitialKind kind = InitialKind::UniformN;
    double rho = 0.5;            ///< Bernoulli, GrandCanonical1d; UniformN/Stationary1d when n is unset
    std::optional<std::size_t> n;
    int block = 0;               ///< CenteredBlock side

    std::size_t particles(std::size_t volume) const {
        return n ? *n : static_cast<std::size_t>(std::llround(rho * static_cast<double>(volume)));
    }
};

inline Configuration initialCondition(const InitialSpec& spec, const GeometryPtr& g, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t V = g->volume();
    std::vector<std::uint8_t> occ(V, 0);
    switch (spec.kind) {
    case InitialKind::UniformN: {
        const std::size_t n = spec.particles(V);
        if (n > V) throw std::invalid_argument("cannot place " + std::to_string(n) + " particles on " + std::to_string(V) + " sites");
        std::vector<Site> perm(V);
        for (Site s = 0; s < V; ++s) perm[s] = s;
        for (std::size_t k = 0; k < n; ++k) {
            std::swap(perm[k], perm[k + rng.index(V - k)]);
            occ[perm[k]] = 1;
        }
        break;
    }
    case InitialKind::Bernoulli:
        if (!(spec.rho >= 0 && spec.rho <= 1)) throw std::invalid_argument("Bernoulli density must lie in [0,1]");
        for (auto& o : occ) o = rng.bernoulli(spec.rho);
        break;
    case InitialKind::Chessboard:
        for (Site s = 0; s < V; ++s) {
            int sum = 0;
            for (int k = 0; k < g->dimension(); ++k) sum += g->axisPosition(s, k);
            occ[s] = (sum % 2 == 0);
        }
        break;
    case InitialKind::CenteredBlock: {
        const int m = spec.block, L = g->side();
        if (m < 1 || m > L) throw std::invalid_argument("block side must lie in [1, L]");
        const int lo = (L - m) / 2;
        for (Site s = 0; s < V; ++s) {
            bool inside = true;
            for (int k = 0; k < g->dimension() && inside; ++k) {
                const int p = g->axisPosition(s, k);
                inside = p >= lo && p < lo + m;
            }
            occ[s] = inside;
        }
        break;
    }
    case InitialKind::GrandCanonical1d:
        if (g->dimension() != 1) throw std::invalid_argument("grand-canonical-1d needs d = 1");
        occ = g->mode() == BoundaryMode::Periodic ? exact1d::samplePiRhoRing(spec.rho, V, rng)
                                                  : exact1d::samplePiRho(spec.rho, V, rng);
        break;
    case InitialKind::Stationary1d:
        if (g->dimension() != 1 || g->mode() != BoundaryMode::Periodic)
            throw std::invalid_argument("stationary-1d needs a 1D ring");
        occ = exact1d::sampleErgodicRing(V, spec.particles(V), rng);
        break;
    }
    return Configuration(g, occ);
}

// ---------------------------------------------------------------------------
// Absorption times

struct AbsorptionSample {
    double time = 0;
    std::uint64_t events = 0;
    bool censored = false;
};

/// One run per seed from `initial` until no jump is allowed, or until the
/// event cap / time cap (then flagged censored).
inline std::vector<AbsorptionSample> absorptionTimes(const Configuration& initial, const std::vector<std::uint64_t>& seeds,
                                                     std::uint64_t eventCap,
                                                     double timeCap = std::numeric_limits<double>::infinity()) {
    std::vector<AbsorptionSample> out;
    out.reserve(seeds.size());
    for (auto seed : seeds) {
        Simulation sim(initial, seed, initial.geometry().mode() == BoundaryMode::Periodic
                                          ? std::nullopt
                                          : std::optional<BoundarySpec>(BoundarySpec::uniform(initial.geometry(), 0.5)));
        const auto r = sim.runUntil({timeCap, eventCap, true});
        out.push_back({sim.clock(), r.events, r.reason != StopReason::Absorbed});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quasi-stationary protocol

struct QuasiStationaryOptions {
    double burnInFactor = 10;  ///< burn-in of factor * L^2 time units
    int windows = 10;
    double windowTime = 100;
    int maxRestarts = 50;
};

struct QuasiStationaryWindow {
    Configuration snapshot;   ///< at the end of the window
    TrajectoryIntegrals integrals;
};

struct QuasiStationaryResult {
    std::vector<QuasiStationaryWindow> windows;
    int restarts = 0;
    std::vector<double> absorptionTimes;  ///< one per restart
    std::size_t discardedWindows = 0;     ///< windows of runs that later absorbed
};

/// Burn in, then record fixed-length windows. A run that absorbs is dropped,
/// logged, and replaced by a run from a fresh initial condition.
inline QuasiStationaryResult runQuasiStationary(const GeometryPtr& g, const InitialSpec& init, std::uint64_t seed,
                                                const QuasiStationaryOptions& opt) {
    QuasiStationaryResult res;
    const double L = g->side();
    for (int attempt = 0;; ++attempt) {
        if (attempt > opt.maxRestarts)
            throw std::runtime_error("quasi-stationary run absorbed " + std::to_string(attempt) + " times");
        const std::uint64_t s = splitSeed(seed, static_cast<std::uint64_t>(attempt));
        Simulation sim(initialCondition(init, g, splitSeed(s, 0)), splitSeed(s, 1));
        std::vector<QuasiStationaryWindow> windows;
        bool dead = sim.runUntil({opt.burnInFactor * L * L}).reason == StopReason::Absorbed;
        for (int w = 0; w < opt.windows && !dead; ++w) {
            sim.resetIntegrals();
            const double end = sim.clock() + opt.windowTime;
            dead = sim.runUntil({end}).reason == StopReason::Absorbed;
            if (!dead) windows.push_back({sim.config(), sim.integrals()});
        }
        if (!dead) {
            res.windows = std::move(windows);
            return res;
        }
        ++res.restarts;
        res.absorptionTimes.push_back(sim.clock());
        res.discardedWindows += windows.size();
    }
}

}  // namespace clg
