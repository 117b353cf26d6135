#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace clg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("clg_exp_" + name);
    fs::remove_all(p);
    return p;
}

json readJson(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

std::string firstLine(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST(Experiments, ObservablesRecipeWritesItsFiles) {
    const auto dir = scratch("obs");
    const auto c = parseConfig("[experiment]\nrecipe = observables\n[geometry]\nd = 2\nL = 16\n"
                               "[initial]\nrho = 0.7\n[run]\nburn_in_time = 5\nsnapshots = 30\nspacing = 1\n"
                               "[analysis]\nmax_lag = 6\nbox_sizes = 1,2,4,8\n");
    runExperiment(c, dir, {1, false, "test"});
    for (auto f : {"config.ini", "manifest.json", "summary.json", "observables.csv", "corr.csv", "boxvar.csv",
                   "snapshots.txt", "checkpoint.txt"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(firstLine(dir / "observables.csv"), "t,rho,rhoA,activity,sigmaHat,absorbed");
    EXPECT_EQ(firstLine(dir / "corr.csv"), "lag,phi,stderr");
    EXPECT_EQ(firstLine(dir / "boxvar.csv"), "R,var,stderr");
    const auto m = readJson(dir / "manifest.json");
    EXPECT_EQ(m["command"], "test");
    EXPECT_TRUE(m.contains("versions"));
    const auto s = readJson(dir / "summary.json");
    EXPECT_NEAR(s["rho"]["value"].get<double>(), 0.7, 1.0 / 256);

    const auto figs = writePlotData(dir);
    EXPECT_TRUE(fs::exists(dir / "figures" / "correlation-decay.json"));
    EXPECT_TRUE(fs::exists(dir / "figures" / "box-variance.json"));
    EXPECT_FALSE(fs::exists(dir / "figures" / "loglog-scaling.json"));
    const auto spec = readJson(dir / "figures" / "box-variance.json");
    EXPECT_EQ(spec["kind"], "box-variance");
    EXPECT_TRUE(spec.contains("inputs"));
    EXPECT_TRUE(spec.contains("output"));
}

TEST(Experiments, OfflineAnalysisReproducesTheSnapshotStatistics) {
    const auto dir = scratch("offline");
    const auto c = parseConfig("[experiment]\nrecipe = observables\n[geometry]\nd = 1\nL = 256\n"
                               "[initial]\nkind = stationary-1d\nrho = 0.75\n[run]\nsnapshots = 40\nspacing = 5\n"
                               "[analysis]\nmax_lag = 12\n");
    runExperiment(c, dir, {1, false, "test"});
    const auto j = analyzeSnapshotFile(dir / "snapshots.txt", dir / "again", {12, {4, 8, 16, 32, 40}, true});
    EXPECT_EQ(j["snapshots"], 40);
    EXPECT_EQ(firstLine(dir / "again" / "corr.csv"), "lag,phi,stderr");
    EXPECT_THROW(analyzeSnapshotFile(dir / "missing.txt", dir / "x", {}), std::runtime_error);
}

TEST(Experiments, BoundaryRecipeComparesWithTheHarmonicProfile) {
    const auto dir = scratch("boundary");
    const auto c = parseConfig("[experiment]\nrecipe = cylinder-current\n[geometry]\nd = 2\nL = 6\nmode = cylinder\n"
                               "[boundary]\nalpha_left = 0.8\nalpha_right = 0.3\nwindows = 4\nwindow_time = 200\n");
    runExperiment(c, dir, {1, false, "test"});
    EXPECT_EQ(firstLine(dir / "current.csv"), "t,J_left,J_right");
    const auto s = readJson(dir / "summary.json");
    EXPECT_NEAR(s["K"].get<double>(), 6.0 / 7.0, 1e-12);
    EXPECT_NEAR(s["expected_slope"].get<double>(), 6.0 / 7.0 * (0.3 - 0.8), 1e-12);
    writePlotData(dir);
    EXPECT_TRUE(fs::exists(dir / "figures" / "boundary-profile.json"));
    EXPECT_TRUE(fs::exists(dir / "figures" / "current-vs-time.json"));
}

TEST(Experiments, SinglePointSweepRecordsRefusedFits) {
    auto c = parseConfig("[experiment]\nrecipe = sweep\nreplicas = 2\n[geometry]\nd = 1\nL = 128\n"
                         "[initial]\nkind = stationary-1d\n[run]\nsnapshots = 10\nspacing = 5\n[analysis]\nmax_lag = 8\n"
                         "[sweep]\nrho = 0.7\n");
    const auto res = runSweepCore(c, 1);
    ASSERT_EQ(res.points.size(), 1u);
    EXPECT_EQ(res.points[0].replicas, 2);
    for (auto name : {"beta", "b", "gamma", "nu_cross", "alpha"})
        EXPECT_TRUE(res.exponents["fits"][name].contains("refused")) << name;
    EXPECT_EQ(res.exponents["replica_seeds"].size(), 2u);
}

TEST(Experiments, SocRecipeProducesFrozenConfigurations) {
    const auto dir = scratch("soc");
    const auto c = parseConfig("[experiment]\nrecipe = soc\n[geometry]\nd = 2\nL = 24\n"
                               "[initial]\nkind = block\nblock = 6\n[soc]\nseeds = 3\n");
    runExperiment(c, dir, {1, false, "test"});
    const auto s = readJson(dir / "summary.json");
    EXPECT_EQ(s["accepted"].get<int>() + s["rejected"].get<int>() + s["censored"].get<int>(), 3);
    std::ifstream in(dir / "frozen.txt");
    for (const auto& snap : readSnapshots(in)) EXPECT_TRUE(allowedJumps(snap.config).empty());
}

TEST(Experiments, ExactTableHasTheDocumentedColumns) {
    const auto p = scratch("exact.csv");
    writeExactCsv(p, {0.6, 0.75});
    EXPECT_EQ(firstLine(p), "rho,rhoA,activity,D,chi,sigma,xiCross,xiPerp");
}
