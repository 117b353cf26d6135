#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "clg/stats.hpp"

namespace clg {

/// Estimated spatial two-point correlation phi(r).
struct CorrelationProfile {
    int dimension = 1;
    int maxLag = 0;
    std::size_t samples = 0;
    double rhoHat = 0;

    /// Averaged over the d axis directions and both signs; index = lag.
    std::vector<double> axisPhi, axisError;
    /// Mean over all displacement vectors of l1 norm r; index = r.
    std::vector<double> shellPhi, shellError;
    /// Number of displacement vectors with l1 norm r in Z^d.
    std::vector<double> shellSize;

    /// Set when there were too few samples to attach an uncertainty.
    bool uncertaintyFlagged = false;

    std::optional<stats::Estimate> xiCross;
};

}  // namespace clg
