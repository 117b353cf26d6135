#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clg/lattice.hpp"
#include "clg/simulation.hpp"

namespace clg {

// Text checkpoint, one record per line:
//
//   clg-checkpoint 2
//   geometry <d> <L> <mode>
//   clock <hexfloat>
//   events <count>
//   integrals <duration> <activeEdges> <activeParticles> (hexfloat) <jumps> <resamples>
//   boundary none | boundary <k> <alpha_1> ... <alpha_k> (hexfloat)
//   rng <engine state>
//   occupancy <one 0/1 character per site, flat order>
//   edges <count> <edge id> ...   (allowed jumps in sampling order)
//
// Hexfloats make the clock and integrals exact and the edge order fixes which
// jump a given random draw selects, so a resumed run continues the original
// event sequence bit for bit.

namespace detail {

inline std::string hexDouble(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

inline double parseDouble(const std::string& tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw std::runtime_error("malformed number '" + tok + "'");
    return v;
}

inline std::string expectLine(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint truncated before '" + key + "'");
    if (line.compare(0, key.size() + 1, key + " ") != 0 && line != key)
        throw std::runtime_error("checkpoint: expected '" + key + "', got '" + line.substr(0, 40) + "'");
    return line.size() > key.size() ? line.substr(key.size() + 1) : std::string();
}

inline std::string occupancyString(const Configuration& c) {
    std::string s(c.volume(), '0');
    for (Site k = 0; k < c.volume(); ++k)
        if (c.occupied(k)) s[k] = '1';
    return s;
}

inline std::vector<std::uint8_t> parseOccupancy(const std::string& s, std::size_t volume) {
    if (s.size() != volume) throw std::runtime_error("occupancy has " + std::to_string(s.size()) + " sites, expected " + std::to_string(volume));
    std::vector<std::uint8_t> occ(volume);
    for (std::size_t k = 0; k < volume; ++k) {
        if (s[k] != '0' && s[k] != '1') throw std::runtime_error("occupancy must be 0/1 characters");
        occ[k] = s[k] == '1';
    }
    return occ;
}

inline GeometryPtr parseGeometry(const std::string& rest) {
    std::istringstream is(rest);
    int d = 0, L = 0;
    std::string mode;
    if (!(is >> d >> L >> mode)) throw std::runtime_error("malformed geometry record");
    return makeGeometry(d, L, parseBoundaryMode(mode));
}

}  // namespace detail

inline void writeCheckpoint(std::ostream& out, const Simulation& sim) {
    const auto& g = sim.geometry();
    const auto& ti = sim.integrals();
    out << "clg-checkpoint 2\n";
    out << "geometry " << g.dimension() << ' ' << g.side() << ' ' << toString(g.mode()) << '\n';
    out << "clock " << detail::hexDouble(sim.clock()) << '\n';
    out << "events " << sim.eventCount() << '\n';
    out << "integrals " << detail::hexDouble(ti.duration) << ' ' << detail::hexDouble(ti.activeEdges) << ' '
        << detail::hexDouble(ti.activeParticles) << ' ' << ti.jumps << ' ' << ti.resamples << '\n';
    if (sim.boundary()) {
        out << "boundary " << sim.boundary()->alpha.size();
        for (double a : sim.boundary()->alpha) out << ' ' << detail::hexDouble(a);
        out << '\n';
    } else {
        out << "boundary none\n";
    }
    out << "rng " << sim.rng().state() << '\n';
    out << "occupancy " << detail::occupancyString(sim.config()) << '\n';
    const auto ids = sim.edges().orderedIds();
    out << "edges " << ids.size();
    for (auto id : ids) out << ' ' << id;
    out << '\n';
}

inline Simulation readCheckpoint(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != "clg-checkpoint 2") throw std::runtime_error("not a checkpoint (bad header)");
    auto g = detail::parseGeometry(detail::expectLine(in, "geometry"));
    const double clock = detail::parseDouble(detail::expectLine(in, "clock"));
    const auto events = std::stoull(detail::expectLine(in, "events"));
    TrajectoryIntegrals ti;
    {
        std::istringstream is(detail::expectLine(in, "integrals"));
        std::string a, b, c;
        if (!(is >> a >> b >> c >> ti.jumps >> ti.resamples)) throw std::runtime_error("malformed integrals record");
        ti.duration = detail::parseDouble(a);
        ti.activeEdges = detail::parseDouble(b);
        ti.activeParticles = detail::parseDouble(c);
    }
    std::optional<BoundarySpec> boundary;
    {
        std::istringstream is(detail::expectLine(in, "boundary"));
        std::string first;
        is >> first;
        if (first != "none") {
            const auto k = std::stoull(first);
            BoundarySpec b;
            std::string tok;
            for (std::size_t j = 0; j < k; ++j) {
                if (!(is >> tok)) throw std::runtime_error("boundary record too short");
                b.alpha.push_back(detail::parseDouble(tok));
            }
            boundary = std::move(b);
        }
    }
    const std::string rng = detail::expectLine(in, "rng");
    Configuration c(g, detail::parseOccupancy(detail::expectLine(in, "occupancy"), g->volume()));
    std::vector<std::uint32_t> order;
    {
        std::istringstream is(detail::expectLine(in, "edges"));
        std::size_t k = 0;
        if (!(is >> k)) throw std::runtime_error("malformed edges record");
        order.resize(k);
        for (auto& id : order)
            if (!(is >> id)) throw std::runtime_error("edges record too short");
    }
    Simulation sim(std::move(c), 0, std::move(boundary));
    try {
        sim.restoreState(clock, events, rng, ti, order);
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("inconsistent checkpoint: ") + e.what());
    }
    return sim;
}

// ---------------------------------------------------------------------------
// Snapshot files: a trajectory of configurations for offline analysis.
//
//   clg-snapshots 1
//   geometry <d> <L> <mode>
//   <time hexfloat> <occupancy 0/1 string>     (one line per snapshot)

struct Snapshot {
    double time;
    Configuration config;
};

inline void writeSnapshotHeader(std::ostream& out, const Geometry& g) {
    out << "clg-snapshots 1\ngeometry " << g.dimension() << ' ' << g.side() << ' ' << toString(g.mode()) << '\n';
}

inline void writeSnapshot(std::ostream& out, double t, const Configuration& c) {
    out << detail::hexDouble(t) << ' ' << detail::occupancyString(c) << '\n';
}

inline std::vector<Snapshot> readSnapshots(std::istream& in) {
    std::string header;
    std::getline(in, header);
    if (header != "clg-snapshots 1") throw std::runtime_error("not a snapshot file (bad header)");
    auto g = detail::parseGeometry(detail::expectLine(in, "geometry"));
    std::vector<Snapshot> out;
    std::string line;
    std::size_t lineNo = 2;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        const auto sp = line.find(' ');
        if (sp == std::string::npos) throw std::runtime_error("snapshot line " + std::to_string(lineNo) + " is malformed");
        try {
            out.push_back({detail::parseDouble(line.substr(0, sp)),
                           Configuration(g, detail::parseOccupancy(line.substr(sp + 1), g->volume()))});
        } catch (const std::exception& e) {
            throw std::runtime_error("snapshot line " + std::to_string(lineNo) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace clg
