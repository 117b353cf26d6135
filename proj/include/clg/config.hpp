#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "clg/csv.hpp"
#include "clg/geometry.hpp"
#include "clg/simulation.hpp"

namespace clg {

/// Invalid configuration; `where` is "line N" or "section.key" when known.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, const std::string& what)
        : std::runtime_error(where.empty() ? what : where + ": " + what) {}
};

enum class Recipe { Observables, Exact1dCheck, CylinderCurrent, Boundary, Sweep, Soc };

inline const char* toString(Recipe r) {
    switch (r) {
    case Recipe::Observables: return "observables";
    case Recipe::Exact1dCheck: return "exact1d-check";
    case Recipe::CylinderCurrent: return "cylinder-current";
    case Recipe::Boundary: return "boundary";
    case Recipe::Sweep: return "sweep";
    case Recipe::Soc: return "soc";
    }
    return "?";
}

inline Recipe parseRecipe(const std::string& s) {
    for (auto r : {Recipe::Observables, Recipe::Exact1dCheck, Recipe::CylinderCurrent, Recipe::Boundary, Recipe::Sweep,
                   Recipe::Soc})
        if (s == toString(r)) return r;
    throw std::invalid_argument("unknown recipe '" + s +
                                "' (expected observables, exact1d-check, cylinder-current, boundary, sweep, soc)");
}

/// Everything one experiment needs. Serialized as INI with fixed section
/// and key order, so parse(serialize(c)) reproduces c and its text.
struct ExperimentConfig {
    // [experiment]
    Recipe recipe = Recipe::Observables;
    std::uint64_t seed = 1;
    int replicas = 1;
    std::string output = "out";

    // [geometry]
    int d = 1;
    int L = 64;
    BoundaryMode mode = BoundaryMode::Periodic;

    // [initial]
    InitialKind initial = InitialKind::UniformN;
    double rho = 0.5;
    std::optional<std::size_t> n;
    int block = 0;

    // [run]
    double burnInTime = 0;
    std::uint64_t burnInEvents = 0;
    int snapshots = 100;
    double spacing = 10;
    std::uint64_t maxEvents = 0;  ///< 0: no cap
    int checkpointEvery = 0;      ///< snapshots between checkpoints, 0: only at the end
    bool writeSnapshots = true;

    // [analysis]
    int maxLag = 16;
    std::vector<int> boxSizes;
    bool finiteVolume = true;
    int psiLags = 0;  ///< 0 disables the space-time correlation
    double psiSpacing = 1;
    int psiDistance = 0;
    double einsteinTMin = 1, einsteinTMax = 20;

    // [boundary]
    std::optional<double> alpha;  ///< uniform reservoirs
    double alphaLeft = 0.8, alphaRight = 0.4;
    double boundaryBurnIn = -1;
    int windows = 20;
    double windowTime = 1000;
    double sampleInterval = 10;

    // [sweep]
    std::vector<double> rhoGrid;
    double rhoC = 0.5;
    double fitMin = 0, fitMax = 1;
    std::optional<double> zeta;  ///< supplied hyperuniformity exponent; unset leaves relations needing it open

    // [soc]
    int socSeeds = 20;
    double innerFraction = 0.5;
};

namespace detail {

inline std::string joinList(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + formatDouble(v[k]);
    return s;
}
inline std::string joinList(const std::vector<int>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
    return s;
}

/// (section.key) -> line number, for diagnostics only.
inline std::map<std::string, int> keyLines(const std::string& text) {
    std::map<std::string, int> out;
    std::istringstream is(text);
    std::string line, section;
    int no = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        ++no;
        line = trim(line);
        if (line.empty() || line[0] == ';' || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            out.emplace(section, no);
            continue;
        }
        const auto eq = line.find('=');
        if (eq != std::string::npos) out.emplace(section + "." + trim(line.substr(0, eq)), no);
    }
    return out;
}

}  // namespace detail

inline std::string serialize(const ExperimentConfig& c) {
    std::ostringstream o;
    o << "[experiment]\n";
    o << "recipe = " << toString(c.recipe) << "\n";
    o << "seed = " << c.seed << "\n";
    o << "replicas = " << c.replicas << "\n";
    o << "output = " << c.output << "\n";
    o << "\n[geometry]\n";
    o << "d = " << c.d << "\n";
    o << "L = " << c.L << "\n";
    o << "mode = " << toString(c.mode) << "\n";
    o << "\n[initial]\n";
    o << "kind = " << toString(c.initial) << "\n";
    o << "rho = " << formatDouble(c.rho) << "\n";
    if (c.n) o << "n = " << *c.n << "\n";
    o << "block = " << c.block << "\n";
    o << "\n[run]\n";
    o << "burn_in_time = " << formatDouble(c.burnInTime) << "\n";
    o << "burn_in_events = " << c.burnInEvents << "\n";
    o << "snapshots = " << c.snapshots << "\n";
    o << "spacing = " << formatDouble(c.spacing) << "\n";
    o << "max_events = " << c.maxEvents << "\n";
    o << "checkpoint_every = " << c.checkpointEvery << "\n";
    o << "write_snapshots = " << (c.writeSnapshots ? "true" : "false") << "\n";
    o << "\n[analysis]\n";
    o << "max_lag = " << c.maxLag << "\n";
    o << "box_sizes = " << detail::joinList(c.boxSizes) << "\n";
    o << "finite_volume = " << (c.finiteVolume ? "true" : "false") << "\n";
    o << "psi_lags = " << c.psiLags << "\n";
    o << "psi_spacing = " << formatDouble(c.psiSpacing) << "\n";
    o << "psi_distance = " << c.psiDistance << "\n";
    o << "einstein_tmin = " << formatDouble(c.einsteinTMin) << "\n";
    o << "einstein_tmax = " << formatDouble(c.einsteinTMax) << "\n";
    o << "\n[boundary]\n";
    if (c.alpha) o << "alpha = " << formatDouble(*c.alpha) << "\n";
    o << "alpha_left = " << formatDouble(c.alphaLeft) << "\n";
    o << "alpha_right = " << formatDouble(c.alphaRight) << "\n";
    o << "burn_in = " << formatDouble(c.boundaryBurnIn) << "\n";
    o << "windows = " << c.windows << "\n";
    o << "window_time = " << formatDouble(c.windowTime) << "\n";
    o << "sample_interval = " << formatDouble(c.sampleInterval) << "\n";
    o << "\n[sweep]\n";
    o << "rho = " << detail::joinList(c.rhoGrid) << "\n";
    o << "rho_c = " << formatDouble(c.rhoC) << "\n";
    o << "fit_min = " << formatDouble(c.fitMin) << "\n";
    o << "fit_max = " << formatDouble(c.fitMax) << "\n";
    if (c.zeta) o << "zeta = " << formatDouble(*c.zeta) << "\n";
    o << "\n[soc]\n";
    o << "seeds = " << c.socSeeds << "\n";
    o << "inner_fraction = " << formatDouble(c.innerFraction) << "\n";
    return o.str();
}

inline const std::vector<std::string>& requiredKeys() {
    static const std::vector<std::string> keys{"experiment.recipe", "geometry.d", "geometry.L"};
    return keys;
}

/// Parse INI text. `overrides` are "section.key=value" strings applied on top
/// of the file, one key each.
inline ExperimentConfig parseConfig(const std::string& text, const std::vector<std::string>& overrides = {}) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    {
        std::istringstream is(text);
        try {
            pt::read_ini(is, tree);
        } catch (const pt::ini_parser_error& e) {
            throw ConfigError("line " + std::to_string(e.line()), e.message());
        }
    }
    const auto lines = detail::keyLines(text);
    auto where = [&](const std::string& key) {
        const auto it = lines.find(key);
        return it == lines.end() ? key : "line " + std::to_string(it->second) + " (" + key + ")";
    };
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        const auto dot = ov.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("override '" + ov + "'", "expected section.key=value");
        tree.put(ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (tree.empty()) {
        std::string msg = "empty configuration; required keys:";
        for (const auto& k : requiredKeys()) msg += " " + k;
        throw ConfigError("", msg);
    }

    static const std::map<std::string, std::set<std::string>> known{
        {"experiment", {"recipe", "seed", "replicas", "output"}},
        {"geometry", {"d", "L", "mode"}},
        {"initial", {"kind", "rho", "n", "block"}},
        {"run", {"burn_in_time", "burn_in_events", "snapshots", "spacing", "max_events", "checkpoint_every",
                 "write_snapshots"}},
        {"analysis", {"max_lag", "box_sizes", "finite_volume", "psi_lags", "psi_spacing", "psi_distance",
                      "einstein_tmin", "einstein_tmax"}},
        {"boundary", {"alpha", "alpha_left", "alpha_right", "burn_in", "windows", "window_time", "sample_interval"}},
        {"sweep", {"rho", "rho_c", "fit_min", "fit_max", "zeta"}},
        {"soc", {"seeds", "inner_fraction"}},
    };
    for (const auto& [section, sub] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) {
            if (sub.empty() && !sub.data().empty()) throw ConfigError(where("." + section), "key '" + section + "' outside any section");
            throw ConfigError(where(section), "unknown section [" + section + "]");
        }
        for (const auto& [key, value] : sub)
            if (!it->second.count(key)) throw ConfigError(where(section + "." + key), "unknown key '" + key + "' in [" + section + "]");
    }
    std::vector<std::string> missing;
    for (const auto& k : requiredKeys())
        if (!tree.get_optional<std::string>(k)) missing.push_back(k);
    if (!missing.empty()) {
        std::string msg = "missing required keys:";
        for (const auto& k : missing) msg += " " + k;
        throw ConfigError("", msg);
    }

    ExperimentConfig c;
    auto raw = [&](const std::string& key) { return tree.get_optional<std::string>(key); };
    auto field = [&](const std::string& key, auto& dst, auto convert) {
        const auto v = raw(key);
        if (!v) return;
        try {
            dst = convert(*v);
        } catch (const std::exception& e) {
            throw ConfigError(where(key), "invalid value '" + *v + "': " + e.what());
        }
    };
    auto toInt = [](const std::string& s) {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("not an integer");
        return v;
    };
    auto toU64 = [](const std::string& s) {
        std::size_t pos = 0;
        if (!s.empty() && s[0] == '-') throw std::invalid_argument("must be non-negative");
        const auto v = std::stoull(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("not an integer");
        return static_cast<std::uint64_t>(v);
    };
    auto toDouble = [](const std::string& s) {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("not a number");
        return v;
    };
    auto toBool = [](const std::string& s) {
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw std::invalid_argument("expected true or false");
    };
    auto toString = [](const std::string& s) { return s; };
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string item;
        std::istringstream is(s);
        while (std::getline(is, item, ',')) {
            const auto a = item.find_first_not_of(' ');
            const auto b = item.find_last_not_of(' ');
            if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
        }
        return out;
    };

    field("experiment.recipe", c.recipe, [](const std::string& s) { return parseRecipe(s); });
    field("experiment.seed", c.seed, toU64);
    field("experiment.replicas", c.replicas, toInt);
    field("experiment.output", c.output, toString);
    field("geometry.d", c.d, toInt);
    field("geometry.L", c.L, toInt);
    field("geometry.mode", c.mode, [](const std::string& s) { return parseBoundaryMode(s); });
    field("initial.kind", c.initial, [](const std::string& s) { return parseInitialKind(s); });
    field("initial.rho", c.rho, toDouble);
    field("initial.n", c.n, [&](const std::string& s) { return std::optional<std::size_t>(toU64(s)); });
    field("initial.block", c.block, toInt);
    field("run.burn_in_time", c.burnInTime, toDouble);
    field("run.burn_in_events", c.burnInEvents, toU64);
    field("run.snapshots", c.snapshots, toInt);
    field("run.spacing", c.spacing, toDouble);
    field("run.max_events", c.maxEvents, toU64);
    field("run.checkpoint_every", c.checkpointEvery, toInt);
    field("run.write_snapshots", c.writeSnapshots, toBool);
    if (!raw("analysis.max_lag")) c.maxLag = std::min(c.maxLag, std::max(0, (c.L - 1) / 2));
    field("analysis.max_lag", c.maxLag, toInt);
    field("analysis.box_sizes", c.boxSizes, [&](const std::string& s) {
        std::vector<int> v;
        for (const auto& x : split(s)) v.push_back(toInt(x));
        return v;
    });
    field("analysis.finite_volume", c.finiteVolume, toBool);
    field("analysis.psi_lags", c.psiLags, toInt);
    field("analysis.psi_spacing", c.psiSpacing, toDouble);
    field("analysis.psi_distance", c.psiDistance, toInt);
    field("analysis.einstein_tmin", c.einsteinTMin, toDouble);
    field("analysis.einstein_tmax", c.einsteinTMax, toDouble);
    field("boundary.alpha", c.alpha, [&](const std::string& s) { return std::optional<double>(toDouble(s)); });
    field("boundary.alpha_left", c.alphaLeft, toDouble);
    field("boundary.alpha_right", c.alphaRight, toDouble);
    field("boundary.burn_in", c.boundaryBurnIn, toDouble);
    field("boundary.windows", c.windows, toInt);
    field("boundary.window_time", c.windowTime, toDouble);
    field("boundary.sample_interval", c.sampleInterval, toDouble);
    field("sweep.rho", c.rhoGrid, [&](const std::string& s) {
        std::vector<double> v;
        for (const auto& x : split(s)) v.push_back(toDouble(x));
        return v;
    });
    field("sweep.rho_c", c.rhoC, toDouble);
    field("sweep.fit_min", c.fitMin, toDouble);
    field("sweep.fit_max", c.fitMax, toDouble);
    field("sweep.zeta", c.zeta, [&](const std::string& s) { return std::optional<double>(toDouble(s)); });
    field("soc.seeds", c.socSeeds, toInt);
    field("soc.inner_fraction", c.innerFraction, toDouble);

    // cross-field checks, reported against the offending key
    auto check = [&](bool ok, const std::string& key, const std::string& msg) {
        if (!ok) throw ConfigError(where(key), msg);
    };
    check(c.d >= 1, "geometry.d", "must be >= 1");
    check(c.L >= 2, "geometry.L", "must be >= 2");
    check(!(c.mode == BoundaryMode::Cylinder && c.d < 2), "geometry.mode", "cylinder needs d >= 2");
    check(c.replicas >= 1, "experiment.replicas", "must be >= 1");
    check(c.rho >= 0 && c.rho <= 1, "initial.rho", "must lie in [0,1]");
    check(c.snapshots >= 1, "run.snapshots", "must be >= 1");
    check(c.spacing > 0, "run.spacing", "must be positive");
    check(c.maxLag >= 0 && 2 * c.maxLag < c.L, "analysis.max_lag", "must satisfy 0 <= max_lag < L/2");
    for (int R : c.boxSizes) check(R >= 1 && R <= c.L, "analysis.box_sizes", "box sizes must lie in [1, L]");
    check(c.psiLags >= 0, "analysis.psi_lags", "must be >= 0");
    check(c.psiSpacing > 0, "analysis.psi_spacing", "must be positive");
    check(c.psiLags == 0 || (c.psiDistance >= 0 && 2 * c.psiDistance < c.L), "analysis.psi_distance",
          "must satisfy 0 <= psi_distance < L/2");
    if (c.alpha) check(*c.alpha > 0 && *c.alpha < 1, "boundary.alpha", "must lie in (0,1)");
    check(c.alphaLeft > 0 && c.alphaLeft < 1, "boundary.alpha_left", "must lie in (0,1)");
    check(c.alphaRight > 0 && c.alphaRight < 1, "boundary.alpha_right", "must lie in (0,1)");
    check(c.windows >= 2, "boundary.windows", "must be >= 2");
    check(c.windowTime > 0, "boundary.window_time", "must be positive");
    check(c.sampleInterval > 0, "boundary.sample_interval", "must be positive");
    for (std::size_t k = 1; k < c.rhoGrid.size(); ++k)
        check(c.rhoGrid[k] > c.rhoGrid[k - 1], "sweep.rho", "grid must be strictly increasing");
    if (c.recipe == Recipe::Sweep) {
        check(!c.rhoGrid.empty(), "sweep.rho", "sweep needs a density grid");
        check(c.rhoGrid.front() > c.rhoC, "sweep.rho", "grid must lie strictly above rho_c");
    }
    if (c.recipe == Recipe::CylinderCurrent)
        check(c.mode == BoundaryMode::Cylinder || (c.mode == BoundaryMode::OpenBox && c.d == 1), "geometry.mode",
              "cylinder-current needs a cylinder (or a 1D open segment)");
    if (c.recipe == Recipe::Boundary) check(c.mode != BoundaryMode::Periodic, "geometry.mode", "boundary recipe needs an open axis");
    if (c.recipe == Recipe::Soc) {
        check(c.mode == BoundaryMode::Periodic, "geometry.mode", "soc needs a periodic box");
        check(c.block >= 1 && c.block + 2 <= c.L, "initial.block", "soc block must fit strictly inside the box");
        check(c.socSeeds >= 1, "soc.seeds", "must be >= 1");
    }
    if (c.recipe == Recipe::Observables || c.recipe == Recipe::Exact1dCheck || c.recipe == Recipe::Sweep)
        check(c.mode == BoundaryMode::Periodic, "geometry.mode", "bulk measurements need a periodic lattice");
    if (c.recipe == Recipe::Exact1dCheck) {
        check(c.d == 1, "geometry.d", "exact1d-check needs d = 1");
        check(c.rho > 0.5 && c.rho < 1, "initial.rho", "exact1d-check needs rho in (1/2, 1)");
    }
    return c;
}

inline ExperimentConfig loadConfig(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parseConfig(ss.str(), overrides);
    } catch (const ConfigError& e) {
        throw ConfigError(path, e.what());
    }
}

}  // namespace clg
