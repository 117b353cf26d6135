#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace clg {

/// Flat site index into the row-major linearization of [1,L]^d (axis 1 slowest).
using Site = std::uint32_t;

/// 1-based lattice coordinates; mirror sites may carry 0 or L+1 on open axes.
using Coord = std::vector<int>;

inline constexpr Site kMirror = static_cast<Site>(-1);

enum class BoundaryMode {
    Periodic,  ///< torus in every axis
    OpenBox,   ///< open in every axis, reservoirs on the whole boundary
    Cylinder,  ///< open in axis 1, periodic in axes 2..d
};

inline std::string_view toString(BoundaryMode m) {
    switch (m) {
    case BoundaryMode::Periodic: return "periodic";
    case BoundaryMode::OpenBox: return "open";
    case BoundaryMode::Cylinder: return "cylinder";
    }
    return "?";
}

inline BoundaryMode parseBoundaryMode(std::string_view s) {
    if (s == "periodic" || s == "torus") return BoundaryMode::Periodic;
    if (s == "open" || s == "open-box") return BoundaryMode::OpenBox;
    if (s == "cylinder") return BoundaryMode::Cylinder;
    throw std::invalid_argument("unknown boundary mode '" + std::string(s) +
                                "' (expected periodic, open or cylinder)");
}

struct NeighborList {
    std::vector<Coord> inLattice;
    std::vector<Coord> mirror;
};

/// Lattice geometry with a precomputed neighbour table.
///
/// Each site has exactly 2d slots ordered (axis 1 minus, axis 1 plus, axis 2
/// minus, ...). A slot holds either an in-lattice flat index or kMirror when
/// the step leaves an open axis.
class Geometry {
public:
    Geometry(int dimension, int side, BoundaryMode mode = BoundaryMode::Periodic)
        : d_(dimension), L_(side), mode_(mode) {
        if (d_ < 1) throw std::invalid_argument("dimension must be >= 1");
        if (L_ < 2) throw std::invalid_argument("side must be >= 2");
        if (mode_ == BoundaryMode::Cylinder && d_ < 2)
            throw std::invalid_argument("cylinder geometry needs d >= 2");
        std::size_t n = 1;
        for (int k = 0; k < d_; ++k) {
            n *= static_cast<std::size_t>(L_);
            if (n > (std::size_t{1} << 31)) throw std::invalid_argument("lattice too large");
        }
        volume_ = n;
        stride_.assign(d_, 1);
        for (int k = d_ - 2; k >= 0; --k) stride_[k] = stride_[k + 1] * static_cast<std::size_t>(L_);
        buildTable();
    }

    int dimension() const { return d_; }
    int side() const { return L_; }
    BoundaryMode mode() const { return mode_; }
    std::size_t volume() const { return volume_; }
    int degree() const { return 2 * d_; }

    bool axisIsOpen(int axis) const {
        return mode_ == BoundaryMode::OpenBox || (mode_ == BoundaryMode::Cylinder && axis == 0);
    }

    /// Neighbour in slot `slot` of site `s`, or kMirror.
    Site neighbor(Site s, int slot) const { return table_[static_cast<std::size_t>(s) * 2 * d_ + slot]; }
    const Site* neighborSlots(Site s) const { return table_.data() + static_cast<std::size_t>(s) * 2 * d_; }

    int mirrorCount(Site s) const { return mirrorCount_[s]; }
    bool isBoundarySite(Site s) const { return mirrorCount_[s] > 0; }

    /// Sites with at least one mirror neighbour, in increasing flat order.
    const std::vector<Site>& boundarySites() const { return boundary_; }

    bool contains(const Coord& c) const {
        if (static_cast<int>(c.size()) != d_) return false;
        for (int v : c)
            if (v < 1 || v > L_) return false;
        return true;
    }

    Site index(const Coord& c) const {
        if (!contains(c)) throw std::out_of_range("site " + describe(c) + " outside [1," + std::to_string(L_) + "]^" + std::to_string(d_));
        std::size_t s = 0;
        for (int k = 0; k < d_; ++k) s += static_cast<std::size_t>(c[k] - 1) * stride_[k];
        return static_cast<Site>(s);
    }

    Coord coord(Site s) const {
        Coord c(d_);
        std::size_t r = s;
        for (int k = 0; k < d_; ++k) {
            c[k] = static_cast<int>(r / stride_[k]) + 1;
            r %= stride_[k];
        }
        return c;
    }

    /// 0-based position of `s` along `axis`.
    int axisPosition(Site s, int axis) const {
        return static_cast<int>((s / stride_[axis]) % static_cast<std::size_t>(L_));
    }

    std::size_t stride(int axis) const { return stride_[axis]; }

    /// Translate by `shift` with wraparound on every axis (used on the torus).
    Site translate(Site s, const std::vector<int>& shift) const {
        std::size_t out = 0;
        for (int k = 0; k < d_; ++k) {
            int p = axisPosition(s, k) + shift[k];
            p %= L_;
            if (p < 0) p += L_;
            out += static_cast<std::size_t>(p) * stride_[k];
        }
        return static_cast<Site>(out);
    }

    NeighborList neighbors(const Coord& c) const {
        index(c);  // range check
        NeighborList out;
        for (int k = 0; k < d_; ++k) {
            for (int dir : {-1, +1}) {
                Coord n = c;
                n[k] += dir;
                if (n[k] < 1 || n[k] > L_) {
                    if (axisIsOpen(k)) {
                        out.mirror.push_back(n);
                        continue;
                    }
                    n[k] = n[k] < 1 ? L_ : 1;
                }
                out.inLattice.push_back(n);
            }
        }
        return out;
    }

    static std::string describe(const Coord& c) {
        std::string s = "(";
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (k) s += ",";
            s += std::to_string(c[k]);
        }
        return s + ")";
    }

    bool operator==(const Geometry& o) const { return d_ == o.d_ && L_ == o.L_ && mode_ == o.mode_; }

private:
    void buildTable() {
        const int deg = 2 * d_;
        table_.assign(volume_ * deg, kMirror);
        mirrorCount_.assign(volume_, 0);
        for (std::size_t s = 0; s < volume_; ++s) {
            for (int k = 0; k < d_; ++k) {
                const int p = axisPosition(static_cast<Site>(s), k);
                for (int side = 0; side < 2; ++side) {
                    const int q = p + (side == 0 ? -1 : 1);
                    Site nb;
                    if (q < 0 || q >= L_) {
                        if (axisIsOpen(k)) {
                            nb = kMirror;
                        } else {
                            const int w = q < 0 ? L_ - 1 : 0;
                            nb = static_cast<Site>(s - static_cast<std::size_t>(p) * stride_[k] +
                                                   static_cast<std::size_t>(w) * stride_[k]);
                        }
                    } else {
                        nb = static_cast<Site>(side == 0 ? s - stride_[k] : s + stride_[k]);
                    }
                    table_[s * deg + 2 * k + side] = nb;
                    if (nb == kMirror) ++mirrorCount_[s];
                }
            }
            if (mirrorCount_[s] > 0) boundary_.push_back(static_cast<Site>(s));
        }
    }

    int d_;
    int L_;
    BoundaryMode mode_;
    std::size_t volume_ = 0;
    std::vector<std::size_t> stride_;
    std::vector<Site> table_;
    std::vector<std::uint8_t> mirrorCount_;
    std::vector<Site> boundary_;
};

}  // namespace clg
