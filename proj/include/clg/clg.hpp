#pragma once

/// Umbrella header for the conserved lattice gas library.

#include "clg/geometry.hpp"
#include "clg/lattice.hpp"
#include "clg/random.hpp"
#include "clg/simulation.hpp"
#include "clg/stats.hpp"
#include "clg/profile.hpp"
#include "clg/observables.hpp"
#include "clg/exact_1d.hpp"
#include "clg/exponents.hpp"
#include "clg/boundary.hpp"
#include "clg/soc.hpp"
#include "clg/checkpoint.hpp"
#include "clg/config.hpp"
#include "clg/experiments.hpp"
