#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "clg/experiments.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string output;
    std::size_t threads = 0;
    bool resume = false;
};

void addCommon(CLI::App* app, CommonArgs& a) {
    app->add_option("config", a.config, "experiment INI file")->required()->check(CLI::ExistingFile);
    app->add_option("--set", a.sets, "override a key, section.key=value (repeatable)");
    app->add_option("--seed", a.seed, "root seed (overrides experiment.seed)");
    app->add_option("--output,-o", a.output, "output directory (overrides experiment.output)");
    app->add_option("--threads,-j", a.threads, "worker threads (default: CLG_THREADS or all cores)");
    app->add_flag("--resume", a.resume, "continue from the checkpoint in the output directory");
}

std::string commandLine(int argc, char** argv) {
    std::string s;
    for (int k = 0; k < argc; ++k) s += (k ? " " : "") + std::string(argv[k]);
    return s;
}

/// Returns the process exit code.
int runConfigured(const CommonArgs& a, const std::optional<std::string>& forcedRecipe, const std::string& cmd) {
    auto sets = a.sets;
    if (forcedRecipe) sets.push_back("experiment.recipe=" + *forcedRecipe);
    if (a.seed) sets.push_back("experiment.seed=" + std::to_string(*a.seed));
    if (!a.output.empty()) sets.push_back("experiment.output=" + a.output);
    const auto cfg = clg::loadConfig(a.config, sets);
    clg::RunOptions opt;
    opt.threads = a.threads ? a.threads : clg::defaultThreads();
    opt.resume = a.resume;
    opt.command = cmd;
    clg::runExperiment(cfg, cfg.output, opt);
    std::cout << "wrote " << cfg.output << "/manifest.json\n";
    return 0;
}

std::vector<double> parseRange(const std::string& spec) {
    // lo:hi:n, inclusive
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t p; (p = spec.find(':', start)) != std::string::npos; start = p + 1) parts.push_back(spec.substr(start, p - start));
    parts.push_back(spec.substr(start));
    if (parts.size() != 3) throw CLI::ValidationError("--range", "expected lo:hi:n");
    const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
    const int n = std::stoi(parts[2]);
    if (n < 1) throw CLI::ValidationError("--range", "n must be >= 1");
    std::vector<double> out;
    for (int k = 0; k < n; ++k) out.push_back(n == 1 ? lo : lo + (hi - lo) * k / (n - 1));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conserved lattice gas simulations and analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(clg::kVersion));

    CommonArgs runArgs, sweepArgs, socArgs, boundaryArgs;
    auto* run = app.add_subcommand("run", "run the recipe named in the configuration");
    addCommon(run, runArgs);
    auto* sweep = app.add_subcommand("sweep", "density sweep with exponent fits");
    addCommon(sweep, sweepArgs);
    auto* soc = app.add_subcommand("soc", "spreading of a dense block until it freezes");
    addCommon(soc, socArgs);
    auto* boundary = app.add_subcommand("boundary", "reservoir-driven run (boundary or cylinder-current recipe)");
    addCommon(boundary, boundaryArgs);

    std::vector<double> exactRho;
    std::string exactRange, exactOut = "exact.csv";
    auto* exact = app.add_subcommand("exact", "tabulate exact one-dimensional observables");
    exact->add_option("--rho", exactRho, "densities in (1/2, 1)")->delimiter(',');
    exact->add_option("--range", exactRange, "lo:hi:n evenly spaced densities");
    exact->add_option("--output,-o", exactOut, "CSV path");

    std::string snapFile, analyzeOut = "analysis";
    clg::AnalyzeOptions aopt;
    bool noFiniteVolume = false;
    auto* analyze = app.add_subcommand("analyze", "correlations and box variance from a snapshot file");
    analyze->add_option("snapshots", snapFile, "snapshot file")->required()->check(CLI::ExistingFile);
    analyze->add_option("--output,-o", analyzeOut, "output directory");
    analyze->add_option("--max-lag", aopt.maxLag, "largest correlation lag");
    analyze->add_option("--box-sizes", aopt.boxSizes, "box sides R")->delimiter(',');
    analyze->add_flag("--no-finite-volume", noFiniteVolume, "skip the canonical finite-volume correction");

    std::string plotDir;
    auto* plot = app.add_subcommand("plot-data", "write FigureSpec files for an output directory");
    plot->add_option("dir", plotDir, "output directory of a run")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);
    const auto cmd = commandLine(argc, argv);
    try {
        if (run->parsed()) return runConfigured(runArgs, std::nullopt, cmd);
        if (sweep->parsed()) return runConfigured(sweepArgs, "sweep", cmd);
        if (soc->parsed()) return runConfigured(socArgs, "soc", cmd);
        if (boundary->parsed()) {
            const auto probe = clg::loadConfig(boundaryArgs.config, boundaryArgs.sets);
            const bool cyl = probe.recipe == clg::Recipe::CylinderCurrent;
            return runConfigured(boundaryArgs, std::string(cyl ? "cylinder-current" : "boundary"), cmd);
        }
        if (exact->parsed()) {
            auto rhos = exactRho;
            if (!exactRange.empty()) {
                const auto r = parseRange(exactRange);
                rhos.insert(rhos.end(), r.begin(), r.end());
            }
            if (rhos.empty()) rhos = parseRange("0.51:0.99:49");
            clg::writeExactCsv(exactOut, rhos);
            std::cout << "wrote " << exactOut << "\n";
            return 0;
        }
        if (analyze->parsed()) {
            aopt.finiteVolume = !noFiniteVolume;
            const auto j = clg::analyzeSnapshotFile(snapFile, analyzeOut, aopt);
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (plot->parsed()) {
            for (const auto& p : clg::writePlotData(plotDir)) std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const clg::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
