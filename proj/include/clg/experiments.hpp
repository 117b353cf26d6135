#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/version.hpp>
#include <json.hpp>

#include "clg/boundary.hpp"
#include "clg/checkpoint.hpp"
#include "clg/config.hpp"
#include "clg/csv.hpp"
#include "clg/exact_1d.hpp"
#include "clg/exponents.hpp"
#include "clg/observables.hpp"
#include "clg/parallel.hpp"
#include "clg/soc.hpp"

namespace clg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr const char* kVersion = "0.1.0";

inline json toJson(const Estimate& e) {
    json j;
    j["value"] = std::isfinite(e.value) ? json(e.value) : json(nullptr);
    j["error"] = std::isfinite(e.error) ? json(e.error) : json(nullptr);
    return j;
}

inline json toJson(const std::optional<Estimate>& e) { return e ? toJson(*e) : json(nullptr); }

inline void writeText(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
}

/// Write to a temporary file and rename, so a crash never leaves half a file.
inline void writeAtomic(const fs::path& p, const std::string& text) {
    const fs::path tmp = p.string() + ".tmp";
    writeText(tmp, text);
    fs::rename(tmp, p);
}

inline void writeJson(const fs::path& p, const json& j) { writeText(p, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Stationary bulk run

struct WindowRecord {
    double t = 0;  ///< end of the window
    double rho = 0;
    TrajectoryIntegrals integrals;
    bool absorbed = false;
};

struct BulkRun {
    std::vector<WindowRecord> windows;
    std::vector<Configuration> snapshots;
    std::optional<SpaceTimeCorrelation> psi;
    bool psiPartial = false;  ///< accumulation restarted on resume
    bool absorbed = false;
    std::uint64_t events = 0;
    std::uint64_t seed = 0;
};

inline std::uint64_t replicaSeed(std::uint64_t root, std::uint64_t point, std::uint64_t replica) {
    return splitSeed(splitSeed(root, point), replica);
}

namespace detail {

inline std::string windowLine(const WindowRecord& w) {
    std::ostringstream o;
    o << hexDouble(w.t) << ' ' << hexDouble(w.rho) << ' ' << hexDouble(w.integrals.duration) << ' '
      << hexDouble(w.integrals.activeEdges) << ' ' << hexDouble(w.integrals.activeParticles) << ' ' << w.integrals.jumps
      << ' ' << w.integrals.resamples << ' ' << w.absorbed;
    return o.str();
}

inline WindowRecord parseWindowLine(const std::string& line) {
    std::istringstream is(line);
    std::string t, rho, dur, ae, ap;
    WindowRecord w;
    int abs = 0;
    if (!(is >> t >> rho >> dur >> ae >> ap >> w.integrals.jumps >> w.integrals.resamples >> abs))
        throw std::runtime_error("malformed progress record");
    w.t = parseDouble(t);
    w.rho = parseDouble(rho);
    w.integrals.duration = parseDouble(dur);
    w.integrals.activeEdges = parseDouble(ae);
    w.integrals.activeParticles = parseDouble(ap);
    w.absorbed = abs != 0;
    return w;
}

}  // namespace detail

/// Burn in, then take `snapshots` windows of length `spacing`, recording the
/// window integrals and the configuration at each window end. With a
/// directory, progress is checkpointed and a later call with `resume` picks
/// up from the last checkpoint.
inline BulkRun simulateBulk(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir = {},
                            bool resume = false) {
    auto g = makeGeometry(c.d, c.L, c.mode);
    InitialSpec init{c.initial, c.rho, c.n, c.block};
    BulkRun run;
    run.seed = seed;
    const bool files = !dir.empty();
    const fs::path ckpt = files ? dir / "checkpoint.txt" : fs::path();
    const fs::path progress = files ? dir / "progress.txt" : fs::path();
    const fs::path snapPath = files ? dir / "snapshots.txt" : fs::path();
    const std::uint64_t cap = c.maxEvents ? c.maxEvents : std::numeric_limits<std::uint64_t>::max();

    std::optional<Simulation> sim;
    double t0 = 0;
    if (resume && files && fs::exists(ckpt) && fs::exists(progress)) {
        if (!c.writeSnapshots) throw std::runtime_error("resume needs write_snapshots = true");
        std::ifstream ci(ckpt);
        sim.emplace(readCheckpoint(ci));
        std::ifstream pi(progress);
        std::string line;
        std::getline(pi, line);
        t0 = detail::parseDouble(line.substr(line.find(' ') + 1));
        while (std::getline(pi, line))
            if (!line.empty()) run.windows.push_back(detail::parseWindowLine(line));
        std::ifstream si(snapPath);
        auto snaps = readSnapshots(si);
        if (snaps.size() < run.windows.size()) throw std::runtime_error("snapshot file shorter than the checkpoint");
        for (std::size_t k = 0; k < run.windows.size(); ++k) run.snapshots.push_back(std::move(snaps[k].config));
        run.psiPartial = c.psiLags > 0 && !run.windows.empty();
    } else {
        sim.emplace(initialCondition(init, g, splitSeed(seed, 0)), splitSeed(seed, 1));
        sim->runUntil({std::numeric_limits<double>::infinity(), c.burnInEvents, true});
        sim->runUntil({sim->clock() + c.burnInTime, cap, true});
        t0 = sim->clock();
    }

    std::ofstream snapOut;
    if (files && c.writeSnapshots) {
        // rewrite what the checkpoint covers, then append
        std::ofstream fresh(snapPath, std::ios::trunc);
        writeSnapshotHeader(fresh, *g);
        for (std::size_t k = 0; k < run.snapshots.size(); ++k) writeSnapshot(fresh, run.windows[k].t, run.snapshots[k]);
        fresh.close();
        snapOut.open(snapPath, std::ios::app);
    }
    auto checkpoint = [&] {
        if (!files) return;
        std::ostringstream ck;
        writeCheckpoint(ck, *sim);
        std::ostringstream pr;
        pr << "start " << detail::hexDouble(t0) << '\n';
        for (const auto& w : run.windows) pr << detail::windowLine(w) << '\n';
        if (snapOut.is_open()) snapOut.flush();
        writeAtomic(progress, pr.str());
        writeAtomic(ckpt, ck.str());
    };

    std::optional<SpaceTimeAccumulator> psi;
    if (c.psiLags > 0) psi.emplace(*g, c.psiLags, c.psiDistance, 200);
    double nextPsi = sim->clock();

    for (int k = static_cast<int>(run.windows.size()); k < c.snapshots; ++k) {
        sim->resetIntegrals();
        const double end = t0 + (k + 1) * c.spacing;
        bool dead = false;
        while (!dead) {
            const double target = psi ? std::min(end, nextPsi) : end;
            if (sim->clock() < target) {
                const auto r = sim->runUntil({target, cap, false});
                if (r.reason == StopReason::EventBudget) throw std::runtime_error("event cap reached during measurement");
            }
            if (psi && nextPsi <= end + 1e-9 * c.spacing && sim->clock() >= nextPsi) {
                psi->add(sim->config());
                nextPsi += c.psiSpacing;
                continue;
            }
            if (sim->clock() >= end) break;
        }
        dead = sim->absorbed();
        run.windows.push_back({sim->clock(), sim->config().density(), sim->integrals(), dead});
        run.snapshots.push_back(sim->config());
        if (snapOut.is_open()) writeSnapshot(snapOut, sim->clock(), sim->config());
        if (c.checkpointEvery > 0 && (k + 1) % c.checkpointEvery == 0) checkpoint();
    }
    checkpoint();
    run.absorbed = sim->absorbed();
    run.events = sim->eventCount();
    if (psi) run.psi = psi->result(c.psiSpacing);
    return run;
}

struct BulkSummary {
    Estimate rho, rhoA, activity, sigmaActivity, sigmaCrossings;
    CorrelationProfile corr;
    CompressibilityEstimate chiCorr;
    std::optional<BoxVarianceResult> box;
    std::optional<EinsteinCheck> einstein;
    double activityBoundMax = 0;  ///< max over snapshots of a / ((2d - 1) rho_a)
};

inline std::vector<int> defaultBoxSizes(int L) {
    std::vector<int> out;
    for (int R = 2; R <= L / 8; R = std::max(R + 1, static_cast<int>(R * 1.5))) out.push_back(R);
    return out;
}

inline BulkSummary analyzeBulk(const BulkRun& run, const ExperimentConfig& c) {
    auto g = makeGeometry(c.d, c.L, c.mode);
    BulkSummary s;
    std::vector<double> rho, ra, act, sa, sc;
    const double V = static_cast<double>(g->volume());
    const double E = static_cast<double>(latticeEdgeCount(*g));
    for (const auto& w : run.windows) {
        rho.push_back(w.rho);
        if (!(w.integrals.duration > 0)) continue;
        ra.push_back(w.integrals.activeParticles / (w.integrals.duration * V));
        act.push_back(w.integrals.activeEdges / (w.integrals.duration * V));
    }
    std::vector<TrajectoryIntegrals> ints;
    for (const auto& w : run.windows) ints.push_back(w.integrals);
    s.rho = stats::batchMeans(rho);
    s.rhoA = stats::batchMeans(ra);
    s.activity = stats::batchMeans(act);
    const auto cond = conductivityEstimate(ints, *g);
    s.sigmaActivity = cond.fromActivity;
    s.sigmaCrossings = cond.fromCrossings;
    (void)E;
    for (const auto& snap : run.snapshots) {
        const double na = static_cast<double>(snap.activeCount());
        if (na > 0)
            s.activityBoundMax = std::max(s.activityBoundMax, static_cast<double>(allowedJumps(snap).size()) / ((2 * c.d - 1) * na));
    }
    CorrelationBatches batches;
    s.corr = twoPointCorrelation(run.snapshots, c.maxLag, {}, &batches);
    s.chiCorr = compressibilityFromCorrelations(s.corr, std::nullopt, &batches);
    s.corr.xiCross = s.chiCorr.xiCross;
    const auto sizes = c.boxSizes.empty() ? defaultBoxSizes(c.L) : c.boxSizes;
    if (!sizes.empty()) {
        BoxVarianceOptions bo;
        bo.finiteVolumeCorrection = c.finiteVolume;
        s.box = compressibilityFromBoxVariance(run.snapshots, sizes, bo);
    }
    if (run.psi && !run.psi->insufficient) {
        const double expected = c.d == 1 && c.rho > 0.5 && c.rho < 1 ? exact1d::observables(c.rho).sigma
                                                                     : s.sigmaActivity.value;
        try {
            s.einstein = einsteinSpreadingCheck(*run.psi, c.einsteinTMin, c.einsteinTMax, c.psiDistance, expected);
        } catch (const std::invalid_argument&) {
        }
    }
    return s;
}

inline json summaryJson(const BulkSummary& s, const BulkRun& run) {
    json j;
    j["rho"] = toJson(s.rho);
    j["rhoA"] = toJson(s.rhoA);
    j["activity"] = toJson(s.activity);
    j["sigma_activity"] = toJson(s.sigmaActivity);
    j["sigma_crossings"] = toJson(s.sigmaCrossings);
    j["chi_correlation"] = toJson(s.chiCorr.chi);
    j["chi_correlation_cutoff"] = s.chiCorr.cutoff;
    j["chi_correlation_non_decaying"] = s.chiCorr.nonDecaying;
    j["xi_cross"] = toJson(s.chiCorr.xiCross);
    j["phi1"] = s.corr.maxLag >= 1 ? json(toJson(Estimate{s.corr.axisPhi[1], s.corr.axisError[1]})) : json(nullptr);
    if (s.box) {
        j["chi_box"] = s.box->plateau ? toJson(s.box->chi) : json(nullptr);
        j["chi_box_plateau"] = s.box->plateau;
        j["chi_box_window"] = {s.box->plateauMin, s.box->plateauMax};
    }
    if (s.einstein) {
        j["einstein_slope"] = toJson(s.einstein->slope);
        j["einstein_expected"] = s.einstein->expected;
        j["einstein_mass_drift_sigmas"] = s.einstein->massDriftSigmas;
        j["einstein_leakage"] = s.einstein->leakage;
    }
    j["psi_partial"] = run.psiPartial;
    j["activity_bound_max_ratio"] = s.activityBoundMax;
    j["correlation_uncertainty_flagged"] = s.corr.uncertaintyFlagged;
    j["absorbed"] = run.absorbed;
    j["events"] = run.events;
    return j;
}

inline void writeBulkCsvs(const fs::path& dir, const BulkRun& run, const BulkSummary& s, const Geometry& g) {
    {
        CsvWriter w((dir / "observables.csv").string(), {"t", "rho", "rhoA", "activity", "sigmaHat", "absorbed"});
        const double V = static_cast<double>(g.volume());
        const double E = static_cast<double>(latticeEdgeCount(g));
        for (const auto& x : run.windows) {
            const double dur = x.integrals.duration;
            const double ra = dur > 0 ? x.integrals.activeParticles / (dur * V) : 0.0;
            const double a = dur > 0 ? x.integrals.activeEdges / (dur * V) : 0.0;
            const double sg = dur > 0 ? x.integrals.activeEdges / (dur * E) / 2 : 0.0;
            w.row(x.t, x.rho, ra, a, sg, x.absorbed);
        }
    }
    {
        CsvWriter w((dir / "corr.csv").string(), {"lag", "phi", "stderr"});
        for (int r = 0; r <= s.corr.maxLag; ++r) w.row(r, s.corr.shellPhi[r], s.corr.shellError[r]);
    }
    if (s.box) {
        CsvWriter w((dir / "boxvar.csv").string(), {"R", "var", "stderr"});
        for (const auto& p : s.box->curve) w.row(p.R, p.variance, p.error);
    }
    if (run.psi) {
        CsvWriter w((dir / "psi.csv").string(), {"t", "i1", "psi"});
        for (int t = 0; t <= run.psi->maxTimeLag; ++t)
            for (int i = -run.psi->maxDistance; i <= run.psi->maxDistance; ++i)
                w.row(t * run.psi->spacing, i, run.psi->at(t, i));
    }
}

// ---------------------------------------------------------------------------
// Exact 1D table

inline void writeExactCsv(const fs::path& path, const std::vector<double>& rhos) {
    CsvWriter w(path.string(), {"rho", "rhoA", "activity", "D", "chi", "sigma", "xiCross", "xiPerp"});
    for (double r : rhos) {
        const auto o = exact1d::observables(r);
        w.row(o.rho, o.rhoA, o.activity, o.D, o.chi, o.sigma, o.xiCross, o.xiPerp);
    }
}

// ---------------------------------------------------------------------------
// Manifest

struct Manifest {
    std::string command;
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> outputs;
    double wallSeconds = 0;
};

inline void writeManifest(const fs::path& dir, const Manifest& m) {
    json j;
    j["command"] = m.command;
    j["config"] = m.config;
    j["seeds"] = m.seeds;
    j["versions"] = {{"clg", kVersion},
                     {"compiler", __VERSION__},
                     {"boost", BOOST_LIB_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)}};
    j["wall_time_s"] = m.wallSeconds;
    j["outputs"] = m.outputs;
    writeJson(dir / "manifest.json", j);
}

// ---------------------------------------------------------------------------
// Recipes

struct RunOptions {
    std::size_t threads = 1;
    bool resume = false;
    std::string command;
};

/// A tolerance check recorded in a recipe summary.
inline json comparison(const std::string& name, double measured, double error, double expected, double tol,
                       bool relative) {
    const double dev = relative ? std::abs(measured - expected) / std::abs(expected) : std::abs(measured - expected);
    return {{"quantity", name}, {"measured", measured}, {"error", std::isfinite(error) ? json(error) : json(nullptr)},
            {"expected", expected}, {"deviation", dev}, {"tolerance", tol},
            {"relative", relative}, {"pass", dev < tol}};
}

inline json exact1dComparison(const BulkSummary& s, double rho) {
    const auto ex = exact1d::observables(rho);
    json a = json::array();
    a.push_back(comparison("rhoA", s.rhoA.value, s.rhoA.error, ex.rhoA, 0.01, true));
    a.push_back(comparison("activity", s.activity.value, s.activity.error, ex.activity, 0.02, true));
    a.push_back(comparison("sigma", s.sigmaActivity.value, s.sigmaActivity.error, ex.sigma, 0.03, true));
    a.push_back(comparison("chi_correlation", s.chiCorr.chi.value, s.chiCorr.chi.error, ex.chi, 0.07, true));
    if (s.box)
        a.push_back(comparison("chi_box", s.box->plateau ? s.box->chi.value : std::nan(""), s.box->chi.error, ex.chi,
                               0.07, true));
    if (s.corr.maxLag >= 1)
        a.push_back(comparison("phi1", s.corr.axisPhi[1], s.corr.axisError[1], exact1d::correlation(rho, 1), 0.003, false));
    return a;
}

inline void runBulkRecipe(const ExperimentConfig& c, const fs::path& dir, const RunOptions& opt, Manifest& m) {
    const auto seed = replicaSeed(c.seed, 0, 0);
    m.seeds.push_back(seed);
    const auto run = simulateBulk(c, seed, dir, opt.resume);
    const auto s = analyzeBulk(run, c);
    auto g = makeGeometry(c.d, c.L, c.mode);
    writeBulkCsvs(dir, run, s, *g);
    m.outputs.insert(m.outputs.end(), {"observables.csv", "corr.csv", "checkpoint.txt", "progress.txt"});
    if (s.box) m.outputs.push_back("boxvar.csv");
    if (run.psi) m.outputs.push_back("psi.csv");
    if (c.writeSnapshots) m.outputs.push_back("snapshots.txt");
    json j = summaryJson(s, run);
    if (c.recipe == Recipe::Exact1dCheck) {
        writeExactCsv(dir / "exact.csv", {c.rho});
        m.outputs.push_back("exact.csv");
        j["comparison"] = exact1dComparison(s, c.rho);
    }
    writeJson(dir / "summary.json", j);
    m.outputs.push_back("summary.json");
}

inline BoundarySpec boundaryFromConfig(const ExperimentConfig& c, const Geometry& g) {
    if (c.alpha) return BoundarySpec::uniform(g, *c.alpha);
    return BoundarySpec::leftRight(g, c.alphaLeft, c.alphaRight);
}

inline void runBoundaryRecipe(const ExperimentConfig& c, const fs::path& dir, Manifest& m) {
    auto g = makeGeometry(c.d, c.L, c.mode);
    const auto b = boundaryFromConfig(c, *g);
    const auto seed = replicaSeed(c.seed, 0, 0);
    m.seeds.push_back(seed);
    BoundaryRunOptions bo;
    bo.burnIn = c.boundaryBurnIn;
    bo.windows = c.windows;
    bo.windowTime = c.windowTime;
    bo.sampleInterval = c.sampleInterval;
    const auto res = runBoundaryDriven(g, b, seed, bo);
    const auto sol = dirichletSolve(*g, b, 1e-11);
    const auto solSite = dirichletSolve(*g, b, 1e-11, 100000, MirrorWeight::PerBoundarySite);
    {
        std::vector<std::string> header;
        for (int k = 1; k <= c.d; ++k) header.push_back("i" + std::to_string(k));
        header.insert(header.end(), {"rhoA_measured", "stderr", "rhoA_dirichlet"});
        std::ofstream out(dir / "profile.csv");
        for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
        out << '\n';
        for (Site s = 0; s < g->volume(); ++s) {
            for (int v : g->coord(s)) out << v << ',';
            out << formatDouble(res.profile.mean[s]) << ',' << formatDouble(res.profile.error[s]) << ','
                << formatDouble(sol.values[s]) << '\n';
        }
    }
    {
        CsvWriter w((dir / "current.csv").string(), {"t", "J_left", "J_right"});
        for (std::size_t k = 0; k < res.current.t.size(); ++k)
            w.row(res.current.t[k], res.current.jLeft[k], res.current.jRight[k]);
    }
    json j;
    j["events"] = res.events;
    j["measured_time"] = res.measuredTime;
    j["K"] = res.current.K;
    const bool lr = !c.alpha;
    if (lr) j["expected_slope"] = res.current.K * (c.alphaRight - c.alphaLeft);
    j["slope_left"] = toJson(res.current.slopeLeft);
    j["slope_right"] = toJson(res.current.slopeRight);
    j["cut_flow"] = toJson(res.current.cutFlow);
    double maxDev = 0, maxErr = 0, maxPerSite = 0;
    json cols = json::array();
    for (int col = 0; col < c.L; ++col) {
        const double target = lr ? linearProfile(c.alphaLeft, c.alphaRight, c.L, col + 1) : *c.alpha;
        const double dev = (res.profile.columnMean[col] - target) / res.profile.columnError[col];
        maxDev = std::max(maxDev, std::abs(dev));
        maxErr = std::max(maxErr, res.profile.columnError[col]);
        cols.push_back({{"i1", col + 1}, {"measured", res.profile.columnMean[col]},
                        {"stderr", res.profile.columnError[col]}, {"expected", target}});
    }
    for (Site s = 0; s < g->volume(); ++s) maxPerSite = std::max(maxPerSite, std::abs(sol.values[s] - solSite.values[s]));
    j["columns"] = cols;
    j["max_column_deviation_sigmas"] = maxDev;
    j["max_column_stderr"] = maxErr;
    j["profile_drift_sigmas"] = res.profile.driftSigmas;
    j["dirichlet_residual"] = sol.residual;
    j["dirichlet_weighting_difference"] = maxPerSite;
    writeJson(dir / "summary.json", j);
    m.outputs.insert(m.outputs.end(), {"profile.csv", "current.csv", "summary.json"});
}

inline void runSocRecipe(const ExperimentConfig& c, const fs::path& dir, const RunOptions& opt, Manifest& m) {
    auto g = makeGeometry(c.d, c.L, c.mode);
    SocOptions so;
    so.block = c.block;
    so.seeds = static_cast<std::size_t>(c.socSeeds);
    so.rootSeed = c.seed;
    so.innerFraction = c.innerFraction;
    so.threads = opt.threads;
    if (c.maxEvents) so.eventCap = c.maxEvents;
    const auto res = socSpreadExperiment(g, so);
    for (const auto& r : res.runs) m.seeds.push_back(r.seed);
    {
        CsvWriter w((dir / "soc.csv").string(),
                    {"seed", "accepted", "touched_edge", "absorbed", "events", "time", "inner_density"});
        for (const auto& r : res.runs)
            w.row(r.seed, r.accepted(), r.touchedEdge, r.absorbed, r.events, r.time, r.innerDensity);
    }
    std::vector<Configuration> frozen;
    {
        std::ofstream out(dir / "frozen.txt");
        writeSnapshotHeader(out, *g);
        for (const auto& r : res.runs)
            if (r.accepted()) {
                writeSnapshot(out, r.time, *r.frozen);
                frozen.push_back(*r.frozen);
            }
    }
    json j;
    j["pooled_inner_density"] = toJson(res.pooled);
    j["accepted"] = res.accepted;
    j["rejected"] = res.rejected;
    j["censored"] = res.censored;
    j["small_sample"] = res.smallSample;
    j["inner_window"] = {{"lo", res.innerLo}, {"side", res.innerSide}};
    m.outputs.insert(m.outputs.end(), {"soc.csv", "frozen.txt"});
    if (!frozen.empty()) {
        std::vector<int> sizes;
        for (int R : c.boxSizes)
            if (R <= res.innerSide) sizes.push_back(R);
        if (c.boxSizes.empty())
            for (int R = 1; R <= res.innerSide; R *= 2) sizes.push_back(R);
        if (!sizes.empty()) {
            BoxVarianceOptions bo;
            bo.region = BoxRegion{res.innerLo, res.innerSide};
            const auto box = compressibilityFromBoxVariance(frozen, sizes, bo);
            CsvWriter w((dir / "boxvar.csv").string(), {"R", "var", "stderr"});
            for (const auto& p : box.curve) w.row(p.R, p.variance, p.error);
            m.outputs.push_back("boxvar.csv");
            try {
                const auto z = hyperuniformityExponent(box.curve, c.d);
                j["zeta"] = toJson(z.zeta);
                j["zeta_within_bound"] = z.withinBound;
            } catch (const std::invalid_argument& e) {
                j["zeta"] = nullptr;
                j["zeta_refused"] = e.what();
            }
        }
    }
    writeJson(dir / "summary.json", j);
    m.outputs.push_back("summary.json");
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepPoint {
    double rho = 0;
    int replicas = 0;
    Estimate rhoA, activity, sigma, chi, chiBox, xiCross;
    std::optional<Estimate> D;
};

namespace detail {

/// Mean over replicas; the error is the replica scatter when there are
/// several replicas, otherwise the single replica's own error.
inline Estimate combine(const std::vector<Estimate>& xs) {
    std::vector<double> v;
    for (const auto& x : xs) v.push_back(x.value);
    if (xs.size() == 1) return xs.front();
    return stats::meanStderr(v);
}

inline std::vector<PowerLawPoint> pointsOf(const std::vector<SweepPoint>& pts, double rhoC,
                                           Estimate SweepPoint::*field) {
    std::vector<PowerLawPoint> out;
    for (const auto& p : pts) out.push_back({p.rho - rhoC, (p.*field).value});
    return out;
}

}  // namespace detail

struct SweepResult {
    std::vector<SweepPoint> points;
    json exponents;
};

inline SweepResult runSweepCore(const ExperimentConfig& c, std::size_t threads) {
    const auto& zetaInput = c.zeta;
    const std::size_t P = c.rhoGrid.size(), R = static_cast<std::size_t>(c.replicas);
    std::vector<BulkSummary> sums(P * R);
    parallelFor(P * R, threads, [&](std::size_t k) {
        const std::size_t p = k / R, r = k % R;
        ExperimentConfig rc = c;
        rc.rho = c.rhoGrid[p];
        rc.n.reset();
        rc.writeSnapshots = false;
        const auto seed = replicaSeed(c.seed, p, r);
        try {
            sums[k] = analyzeBulk(simulateBulk(rc, seed), rc);
        } catch (const std::exception& e) {
            throw std::runtime_error("sweep replica failed at rho=" + formatDouble(rc.rho) + " seed=" +
                                     std::to_string(seed) + ": " + e.what());
        }
    });

    SweepResult res;
    for (std::size_t p = 0; p < P; ++p) {
        SweepPoint pt;
        pt.rho = c.rhoGrid[p];
        pt.replicas = static_cast<int>(R);
        std::vector<Estimate> ra, ac, sg, ch, cb, xi;
        for (std::size_t r = 0; r < R; ++r) {
            const auto& s = sums[p * R + r];
            ra.push_back(s.rhoA);
            ac.push_back(s.activity);
            sg.push_back(s.sigmaActivity);
            ch.push_back(s.chiCorr.chi);
            cb.push_back(s.box && s.box->plateau ? s.box->chi : Estimate{});
            xi.push_back(s.chiCorr.xiCross ? *s.chiCorr.xiCross : Estimate{});
        }
        pt.rhoA = detail::combine(ra);
        pt.activity = detail::combine(ac);
        pt.sigma = detail::combine(sg);
        pt.chi = detail::combine(ch);
        pt.chiBox = detail::combine(cb);
        pt.xiCross = detail::combine(xi);
        res.points.push_back(pt);
    }
    if (P >= 3) {
        std::vector<DensityPoint> dp;
        for (const auto& p : res.points) dp.push_back({p.rho, p.rhoA.value, p.rhoA.error});
        const auto D = numericalD(dp);
        for (std::size_t p = 0; p < P; ++p) res.points[p].D = Estimate{D[p].value, D[p].error};
    }

    json ex;
    ex["rho_c"] = c.rhoC;
    ex["fit_window"] = {c.fitMin, c.fitMax};
    ex["root_seed"] = c.seed;
    json seeds = json::array();
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t r = 0; r < R; ++r) seeds.push_back(replicaSeed(c.seed, p, r));
    ex["replica_seeds"] = seeds;
    ExponentSet es;
    es.rhoC = exact(c.rhoC);
    if (zetaInput) es.zeta = exact(*zetaInput);
    json fits;
    auto fit = [&](const char* name, std::vector<PowerLawPoint> pts, bool negate, std::optional<Estimate>& dst) {
        try {
            const auto f = logLogFit(pts, c.fitMin, c.fitMax);
            fits[name] = {{"exponent", f.exponent}, {"error", f.exponentError}, {"prefactor", f.prefactor},
                          {"r2", f.r2}, {"used", f.used}, {"excluded", f.excluded}};
            dst = Estimate{negate ? -f.exponent : f.exponent, f.exponentError};
        } catch (const std::invalid_argument& e) {
            fits[name] = {{"refused", e.what()}};
        }
    };
    fit("beta", detail::pointsOf(res.points, c.rhoC, &SweepPoint::rhoA), false, es.beta);
    fit("b", detail::pointsOf(res.points, c.rhoC, &SweepPoint::activity), false, es.b);
    fit("gamma", detail::pointsOf(res.points, c.rhoC, &SweepPoint::chi), false, es.gamma);
    fit("nu_cross", detail::pointsOf(res.points, c.rhoC, &SweepPoint::xiCross), true, es.nuCross);
    if (P >= 3) {
        std::vector<PowerLawPoint> dp;
        for (const auto& p : res.points) dp.push_back({p.rho - c.rhoC, p.D->value});
        fit("alpha", dp, false, es.alpha);
    } else {
        fits["alpha"] = {{"refused", "numerical derivative needs at least 3 grid points"}};
    }
    if (zetaInput && *zetaInput < c.d) {
        std::vector<PowerLawPoint> xp;
        for (const auto& p : res.points)
            xp.push_back({p.rho - c.rhoC, xiPerpHiddenDensity(p.rho, exact(c.rhoC), exact(*zetaInput), c.d).value});
        fit("nu_perp", xp, true, es.nuPerp);
        fits["nu_perp"]["method"] = "hidden-density";
    }
    ex["fits"] = fits;
    json set;
    es.forEach([&](const char* n, const std::optional<Estimate>& v) { set[n] = toJson(v); });
    ex["exponents"] = set;
    const auto rep = relationCheck(es, c.d, 1e-9);
    json rj;
    json rs = json::array();
    for (const auto& r : rep.residuals)
        rs.push_back({{"name", r.name}, {"relation", r.relation}, {"value", r.value.value},
                      {"error", std::isfinite(r.value.error) ? json(r.value.error) : json(nullptr)},
                      {"flagged", r.flagged}});
    rj["residuals"] = rs;
    rj["gaps"] = rep.gaps;
    rj["z"] = toJson(rep.zDerived);
    rj["theta"] = toJson(rep.thetaDerived);
    rj["gamma_is_one"] = rep.gammaIsOne;
    rj["notes"] = rep.notes;
    ex["relations"] = rj;
    res.exponents = ex;
    return res;
}

inline void writeSweepCsv(const fs::path& path, const std::vector<SweepPoint>& pts) {
    CsvWriter w(path.string(), {"rho", "replicas", "rhoA", "rhoA_err", "activity", "activity_err", "sigma", "sigma_err",
                                "chi", "chi_err", "chi_box", "chi_box_err", "xi_cross", "xi_cross_err", "D", "D_err"});
    for (const auto& p : pts)
        w.row(p.rho, p.replicas, p.rhoA.value, p.rhoA.error, p.activity.value, p.activity.error, p.sigma.value,
              p.sigma.error, p.chi.value, p.chi.error, p.chiBox.value, p.chiBox.error, p.xiCross.value, p.xiCross.error,
              p.D ? p.D->value : std::nan(""), p.D ? p.D->error : std::nan(""));
}

inline void runSweepRecipe(const ExperimentConfig& c, const fs::path& dir, const RunOptions& opt, Manifest& m) {
    const auto res = runSweepCore(c, opt.threads);
    writeSweepCsv(dir / "sweep.csv", res.points);
    writeText(dir / "exponents.json", res.exponents.dump(2) + "\n");
    for (const auto& s : res.exponents["replica_seeds"]) m.seeds.push_back(s.get<std::uint64_t>());
    m.outputs.insert(m.outputs.end(), {"sweep.csv", "exponents.json"});
}

/// Dispatch on the recipe and write the manifest.
inline void runExperiment(const ExperimentConfig& c, const fs::path& dir, const RunOptions& opt) {
    fs::create_directories(dir);
    const auto start = std::chrono::steady_clock::now();
    Manifest m;
    m.command = opt.command;
    m.config = serialize(c);
    writeText(dir / "config.ini", m.config);
    m.outputs.push_back("config.ini");
    switch (c.recipe) {
    case Recipe::Observables:
    case Recipe::Exact1dCheck: runBulkRecipe(c, dir, opt, m); break;
    case Recipe::CylinderCurrent:
    case Recipe::Boundary: runBoundaryRecipe(c, dir, m); break;
    case Recipe::Sweep: runSweepRecipe(c, dir, opt, m); break;
    case Recipe::Soc: runSocRecipe(c, dir, opt, m); break;
    }
    m.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    writeManifest(dir, m);
}

// ---------------------------------------------------------------------------
// Offline analysis of a snapshot file

struct AnalyzeOptions {
    int maxLag = 16;
    std::vector<int> boxSizes;
    bool finiteVolume = true;
};

inline json analyzeSnapshotFile(const fs::path& snapshots, const fs::path& dir, const AnalyzeOptions& opt) {
    std::ifstream in(snapshots);
    if (!in) throw std::runtime_error("cannot open " + snapshots.string());
    const auto snaps = readSnapshots(in);
    if (snaps.empty()) throw std::runtime_error(snapshots.string() + " holds no snapshots");
    std::vector<Configuration> cs;
    for (const auto& s : snaps) cs.push_back(s.config);
    fs::create_directories(dir);
    json j;
    j["snapshots"] = cs.size();
    j["rho"] = cs.front().density();
    CorrelationBatches batches;
    const auto corr = twoPointCorrelation(cs, opt.maxLag, {}, &batches);
    const auto chi = compressibilityFromCorrelations(corr, std::nullopt, &batches);
    {
        CsvWriter w((dir / "corr.csv").string(), {"lag", "phi", "stderr"});
        for (int r = 0; r <= corr.maxLag; ++r) w.row(r, corr.shellPhi[r], corr.shellError[r]);
    }
    j["chi_correlation"] = toJson(chi.chi);
    j["xi_cross"] = toJson(chi.xiCross);
    j["uncertainty_flagged"] = corr.uncertaintyFlagged;
    const auto sizes = opt.boxSizes.empty() ? defaultBoxSizes(cs.front().geometry().side()) : opt.boxSizes;
    if (!sizes.empty()) {
        BoxVarianceOptions bo;
        bo.finiteVolumeCorrection = opt.finiteVolume;
        const auto box = compressibilityFromBoxVariance(cs, sizes, bo);
        CsvWriter w((dir / "boxvar.csv").string(), {"R", "var", "stderr"});
        for (const auto& p : box.curve) w.row(p.R, p.variance, p.error);
        j["chi_box"] = box.plateau ? toJson(box.chi) : json(nullptr);
        j["chi_box_plateau"] = box.plateau;
        try {
            const auto z = hyperuniformityExponent(box.curve, cs.front().geometry().dimension());
            j["zeta"] = toJson(z.zeta);
        } catch (const std::invalid_argument& e) {
            j["zeta"] = nullptr;
            j["zeta_refused"] = e.what();
        }
    }
    writeJson(dir / "analysis.json", j);
    return j;
}

// ---------------------------------------------------------------------------
// Plot data: FigureSpec files for the plotting component

/// One FigureSpec JSON per plot kind whose input exists in `dir`.
inline std::vector<fs::path> writePlotData(const fs::path& dir) {
    std::optional<ExperimentConfig> cfg;
    if (fs::exists(dir / "config.ini")) {
        std::ifstream in(dir / "config.ini");
        std::stringstream ss;
        ss << in.rdbuf();
        cfg = parseConfig(ss.str());
    }
    const fs::path figDir = dir / "figures";
    fs::create_directories(figDir);
    std::vector<fs::path> written;
    auto emit = [&](const std::string& name, const std::string& kind, const std::vector<std::string>& inputs,
                    json overlay) {
        for (const auto& i : inputs)
            if (!fs::exists(dir / i)) return;
        json j;
        j["kind"] = kind;
        j["inputs"] = inputs;
        j["overlay"] = std::move(overlay);
        j["output"] = "figures/" + name + ".png";
        if (fs::exists(dir / "exponents.json")) j["annotations"] = "exponents.json";
        const auto p = figDir / (name + ".json");
        writeJson(p, j);
        written.push_back(p);
    };
    const bool exact1d = cfg && cfg->d == 1 && cfg->rho > 0.5 && cfg->rho < 1;
    emit("loglog-scaling", "loglog-scaling", {"sweep.csv"},
         cfg ? json{{"type", "none"}, {"rho_c", cfg->rhoC}} : json{{"type", "none"}});
    emit("correlation-decay", "correlation-decay", {"corr.csv"},
         exact1d ? json{{"type", "exact-1d"}, {"rho", cfg->rho}, {"xi_cross", exact1d::observables(cfg->rho).xiCross},
                        {"phi0", cfg->rho * (1 - cfg->rho)}}
                 : json{{"type", "none"}});
    emit("box-variance", "box-variance", {"boxvar.csv"},
         exact1d ? json{{"type", "exact-1d"}, {"chi", exact1d::observables(cfg->rho).chi}} : json{{"type", "none"}});
    emit("boundary-profile", "boundary-profile", {"profile.csv"},
         json{{"type", "dirichlet"}, {"column", "rhoA_dirichlet"}});
    json cur = {{"type", "none"}};
    if (cfg && !cfg->alpha)
        cur = {{"type", "slope"}, {"slope", static_cast<double>(cfg->L) / (cfg->L + 1) * (cfg->alphaRight - cfg->alphaLeft)}};
    emit("current-vs-time", "current-vs-time", {"current.csv"}, cur);
    return written;
}

}  // namespace clg
