#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "clg/geometry.hpp"
#include "clg/indexable_set.hpp"

namespace clg {

using GeometryPtr = std::shared_ptr<const Geometry>;

inline GeometryPtr makeGeometry(int d, int L, BoundaryMode mode = BoundaryMode::Periodic) {
    return std::make_shared<const Geometry>(d, L, mode);
}

/// Occupancy field on a lattice. Mirror sites outside an open axis are never
/// stored; they count as occupied for the activity predicate only.
class Configuration {
public:
    explicit Configuration(GeometryPtr g) : geom_(std::move(g)) {
        occ_.assign(geom_->volume(), 0);
        nbrOcc_.assign(geom_->volume(), 0);
        for (Site s = 0; s < geom_->volume(); ++s) nbrOcc_[s] = static_cast<std::uint8_t>(geom_->mirrorCount(s));
    }

    Configuration(GeometryPtr g, const std::vector<std::uint8_t>& occupancy) : Configuration(std::move(g)) {
        if (occupancy.size() != geom_->volume())
            throw std::invalid_argument("occupancy size does not match lattice volume");
        for (Site s = 0; s < occupancy.size(); ++s)
            if (occupancy[s]) set(s, true);
    }

    const Geometry& geometry() const { return *geom_; }
    const GeometryPtr& geometryPtr() const { return geom_; }
    std::size_t volume() const { return occ_.size(); }

    bool occupied(Site s) const { return occ_[s] != 0; }
    bool occupied(const Coord& c) const { return occupied(geom_->index(c)); }

    /// Number of occupied neighbours, mirror sites included.
    int occupiedNeighbors(Site s) const { return nbrOcc_[s]; }

    /// A_i: occupied with at least one occupied neighbour.
    bool active(Site s) const { return occ_[s] && nbrOcc_[s] > 0; }
    bool isActive(const Coord& c) const { return active(geom_->index(c)); }

    std::size_t particleCount() const { return n_; }
    double density() const { return static_cast<double>(n_) / static_cast<double>(volume()); }

    /// n_a, maintained incrementally.
    std::size_t activeCount() const { return na_; }

    const std::vector<std::uint8_t>& occupancy() const { return occ_; }

    /// Returns true if the occupancy changed.
    bool set(Site s, bool value) {
        if ((occ_[s] != 0) == value) return false;
        const int deg = geom_->degree();
        const Site* nb = geom_->neighborSlots(s);
        long delta = -static_cast<long>(active(s));
        for (int k = 0; k < deg; ++k)
            if (nb[k] != kMirror) delta -= active(nb[k]);
        occ_[s] = value;
        n_ += value ? 1 : -1;
        for (int k = 0; k < deg; ++k) {
            if (nb[k] == kMirror) continue;
            nbrOcc_[nb[k]] = static_cast<std::uint8_t>(nbrOcc_[nb[k]] + (value ? 1 : -1));
            delta += active(nb[k]);
        }
        delta += active(s);
        na_ = static_cast<std::size_t>(static_cast<long>(na_) + delta);
        return true;
    }

    bool operator==(const Configuration& o) const { return *geom_ == *o.geom_ && occ_ == o.occ_; }

private:
    GeometryPtr geom_;
    std::vector<std::uint8_t> occ_;
    std::vector<std::uint8_t> nbrOcc_;
    std::size_t n_ = 0;
    std::size_t na_ = 0;
};

/// Ordered jumps (i, j), i ~ j both in the lattice, with A_i (1 - eta_j) = 1.
/// A jump is encoded as i * 2d + slot where slot indexes the neighbour table.
class ActiveEdgeSet {
public:
    ActiveEdgeSet() = default;
    explicit ActiveEdgeSet(const Geometry& g) : deg_(g.degree()), set_(g.volume() * g.degree()) {}

    std::size_t size() const { return set_.size(); }
    bool empty() const { return set_.empty(); }
    int degree() const { return deg_; }

    std::uint32_t idAt(std::size_t k) const { return set_.at(k); }
    bool containsId(std::uint32_t id) const { return set_.contains(id); }

    static Site source(std::uint32_t id, int deg) { return id / static_cast<std::uint32_t>(deg); }
    static int slot(std::uint32_t id, int deg) { return static_cast<int>(id % static_cast<std::uint32_t>(deg)); }

    bool contains(const Geometry& g, Site i, Site j) const {
        const Site* nb = g.neighborSlots(i);
        for (int k = 0; k < deg_; ++k)
            if (nb[k] == j && set_.contains(i * deg_ + k)) return true;
        return false;
    }

    /// Re-evaluate every jump leaving `src`.
    void refreshSource(const Configuration& c, Site src) {
        const Site* nb = c.geometry().neighborSlots(src);
        const bool a = c.active(src);
        const std::uint32_t base = src * static_cast<std::uint32_t>(deg_);
        for (int k = 0; k < deg_; ++k) {
            const bool allowed = a && nb[k] != kMirror && !c.occupied(nb[k]);
            set_.assign(base + k, allowed);
        }
    }

    /// Re-evaluate all jumps whose validity can depend on the occupancy of `s`:
    /// those leaving s or one of its neighbours.
    void refreshAround(const Configuration& c, Site s) {
        refreshSource(c, s);
        const Site* nb = c.geometry().neighborSlots(s);
        for (int k = 0; k < deg_; ++k)
            if (nb[k] != kMirror) refreshSource(c, nb[k]);
    }

    /// Sorted (source, target) list; used for equality checks.
    std::vector<std::pair<Site, Site>> pairs(const Geometry& g) const {
        std::vector<std::pair<Site, Site>> out;
        out.reserve(size());
        for (auto id : set_) out.emplace_back(source(id, deg_), g.neighbor(source(id, deg_), slot(id, deg_)));
        std::sort(out.begin(), out.end());
        return out;
    }

    /// Edge ids in sampling order. Sampling picks by position, so this order is
    /// part of the dynamical state.
    std::vector<std::uint32_t> orderedIds() const { return {set_.begin(), set_.end()}; }

    /// Reinsert the current members in the given order; the members must match.
    void reorder(const std::vector<std::uint32_t>& ids) {
        if (ids.size() != size()) throw std::invalid_argument("edge order does not match the configuration");
        for (auto id : ids)
            if (id >= set_.capacity() || !set_.contains(id)) throw std::invalid_argument("edge order does not match the configuration");
        set_.clear();
        for (auto id : ids)
            if (!set_.insert(id)) throw std::invalid_argument("edge order lists an edge twice");
    }

    bool sameMembers(const ActiveEdgeSet& o) const {
        if (size() != o.size()) return false;
        for (auto id : set_)
            if (!o.set_.contains(id)) return false;
        return true;
    }

private:
    int deg_ = 0;
    IndexableSet set_;
};

/// Full recomputation of the allowed-jump set.
inline ActiveEdgeSet allowedJumps(const Configuration& c) {
    ActiveEdgeSet s(c.geometry());
    for (Site i = 0; i < c.volume(); ++i) s.refreshSource(c, i);
    return s;
}

/// Move the particle at i to j and update the edge set incrementally.
inline void applyJump(Configuration& c, ActiveEdgeSet& edges, Site i, Site j) {
    if (!edges.contains(c.geometry(), i, j))
        throw std::logic_error("jump " + Geometry::describe(c.geometry().coord(i)) + " -> " +
                               Geometry::describe(c.geometry().coord(j)) + " is not allowed");
    c.set(i, false);
    c.set(j, true);
    edges.refreshAround(c, i);
    edges.refreshAround(c, j);
}

inline void applyJump(Configuration& c, ActiveEdgeSet& edges, const Coord& i, const Coord& j) {
    applyJump(c, edges, c.geometry().index(i), c.geometry().index(j));
}

/// Overwrite one site (reservoir resampling) and update the edge set.
/// Returns true if the occupancy changed.
inline bool setSite(Configuration& c, ActiveEdgeSet& edges, Site s, bool value) {
    if (!c.set(s, value)) return false;
    edges.refreshAround(c, s);
    return true;
}

}  // namespace clg
