#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace clg {

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of replica `stream` derived from `root`. Depends only on the pair, so
/// a sweep is reproducible whatever order its replicas are scheduled in.
inline std::uint64_t splitSeed(std::uint64_t root, std::uint64_t stream) {
    return mix64(mix64(root) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Deterministic generator. Variates are built from raw 64-bit draws so the
/// sequence does not depend on the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n), unbiased (Lemire's method).
    std::uint64_t index(std::uint64_t n) {
        std::uint64_t x = eng_();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t t = (0 - n) % n;
            while (low < t) {
                x = eng_();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

    std::string state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        if (!is) throw std::runtime_error("malformed RNG state");
    }

    bool operator==(const Rng& o) const { return eng_ == o.eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace clg
