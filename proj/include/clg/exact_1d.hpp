#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "clg/exponents.hpp"
#include "clg/random.hpp"

namespace clg::exact1d {

/// Closed-form stationary observables of the one-dimensional model at
/// density rho in (1/2, 1].
struct Observables {
    double rho;
    double rhoA;      ///< (2 rho - 1) / rho
    double activity;  ///< 2 rho_a (1 - rho)
    double D;         ///< 1 / rho^2
    double chi;       ///< rho (1 - rho)(2 rho - 1)
    double sigma;     ///< (1 - rho)(2 rho - 1) / rho
    double xiCross;   ///< -1 / log(1 - rho_a)
    double xiPerp;    ///< 1 / rho_a
};

inline void requireSupercritical(double rho) {
    if (!(rho > 0.5 && rho <= 1.0))
        throw std::domain_error("exact 1D observables need rho in (1/2, 1], got " + std::to_string(rho));
}

inline double activeDensity(double rho) { return (2 * rho - 1) / rho; }

inline Observables observables(double rho) {
    requireSupercritical(rho);
    Observables o{};
    o.rho = rho;
    o.rhoA = activeDensity(rho);
    o.activity = 2 * o.rhoA * (1 - rho);
    o.D = 1 / (rho * rho);
    o.chi = rho * (1 - rho) * (2 * rho - 1);
    o.sigma = (1 - rho) * (2 * rho - 1) / rho;
    o.xiCross = -1 / std::log(1 - o.rhoA);
    o.xiPerp = 1 / o.rhoA;
    return o;
}

/// phi(0, i) = rho (1 - rho)(rho_a - 1)^i
inline double correlation(double rho, int lag) {
    requireSupercritical(rho);
    return rho * (1 - rho) * std::pow(activeDensity(rho) - 1, std::abs(lag));
}

/// No two neighbouring empty sites along the window.
inline bool isErgodic(const std::vector<std::uint8_t>& pattern) {
    for (std::size_t k = 0; k + 1 < pattern.size(); ++k)
        if (!pattern[k] && !pattern[k + 1]) return false;
    return true;
}

/// Probability that a window of length l carries `pattern`:
/// (1 - rho) rho_a^(2p - l + 1 - s_1 - s_l) (1 - rho_a)^(l - 1 - p) on ergodic patterns.
inline double marginal(double rho, const std::vector<std::uint8_t>& pattern) {
    requireSupercritical(rho);
    if (pattern.empty()) throw std::invalid_argument("marginal of an empty window");
    if (!isErgodic(pattern)) return 0.0;
    const int l = static_cast<int>(pattern.size());
    int p = 0;
    for (auto s : pattern) p += s;
    const double ra = activeDensity(rho);
    const int e1 = 2 * p - l + 1 - pattern.front() - pattern.back();
    const int e2 = l - 1 - p;
    return (1 - rho) * std::pow(ra, e1) * std::pow(1 - ra, e2);
}

/// Draw a window of the stationary measure on Z as a two-state Markov chain:
/// eta_1 ~ Ber(rho), P(1 -> 1) = rho_a, P(0 -> 1) = 1.
inline std::vector<std::uint8_t> samplePiRho(double rho, std::size_t length, Rng& rng) {
    if (!(rho > 0.5 && rho < 1.0)) throw std::domain_error("samplePiRho needs rho in (1/2, 1)");
    if (length < 2) throw std::invalid_argument("samplePiRho needs length >= 2");
    const double ra = activeDensity(rho);
    std::vector<std::uint8_t> eta(length);
    eta[0] = rng.bernoulli(rho);
    for (std::size_t k = 1; k < length; ++k) eta[k] = eta[k - 1] ? rng.bernoulli(ra) : 1;
    return eta;
}

inline std::vector<std::uint8_t> samplePiRho(double rho, std::size_t length, std::uint64_t seed) {
    Rng rng(seed);
    return samplePiRho(rho, length, rng);
}

/// Window of length L usable on a ring: draw L + tail sites, drop the first
/// `tail`, and redraw until the wrap edge is ergodic too.
inline std::vector<std::uint8_t> samplePiRhoRing(double rho, std::size_t length, Rng& rng, std::size_t tail = 50) {
    for (;;) {
        auto chain = samplePiRho(rho, length + tail, rng);
        std::vector<std::uint8_t> eta(chain.begin() + static_cast<std::ptrdiff_t>(tail), chain.end());
        if (eta.front() || eta.back()) return eta;
    }
}

/// Exact stationary law on a ring of L sites at fixed particle count n:
/// uniform over ergodic configurations. Built from a random arrangement of
/// (L - n) "01" blocks and (2n - L) "1" blocks, rotated uniformly.
inline std::vector<std::uint8_t> sampleErgodicRing(std::size_t L, std::size_t n, Rng& rng) {
    if (2 * n < L || n > L) throw std::invalid_argument("ergodic ring configuration needs L/2 <= n <= L");
    const std::size_t holes = L - n;
    const std::size_t blocks = n;  // every block holds exactly one particle
    std::vector<std::uint8_t> isHoleBlock(blocks, 0);
    std::fill(isHoleBlock.begin(), isHoleBlock.begin() + static_cast<std::ptrdiff_t>(holes), 1);
    for (std::size_t k = blocks; k > 1; --k) std::swap(isHoleBlock[k - 1], isHoleBlock[rng.index(k)]);
    std::vector<std::uint8_t> line;
    line.reserve(L);
    for (auto h : isHoleBlock) {
        if (h) line.push_back(0);
        line.push_back(1);
    }
    const std::size_t offset = rng.index(L);
    std::vector<std::uint8_t> eta(L);
    for (std::size_t k = 0; k < L; ++k) eta[(k + offset) % L] = line[k];
    return eta;
}

/// b = beta = gamma = nu_x = nu_perp = 1, alpha = 0, zeta = 0, rho_c = 1/2.
/// z and theta are left to the relation checker.
inline ExponentSet exponents() {
    ExponentSet e;
    e.rhoC = exact(0.5);
    e.beta = e.b = e.gamma = e.nuCross = e.nuPerp = exact(1.0);
    e.alpha = exact(0.0);
    e.zeta = exact(0.0);
    return e;
}

}  // namespace clg::exact1d
