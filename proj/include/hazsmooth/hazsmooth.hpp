#pragma once

// Umbrella header: smooth hazard estimation over one or two time scales with
// penalized B-spline Poisson regression on binned data.

#include "hazsmooth/basis.hpp"
#include "hazsmooth/fit1d.hpp"
#include "hazsmooth/fit2d.hpp"
#include "hazsmooth/glam.hpp"
#include "hazsmooth/lexis.hpp"
#include "hazsmooth/nelder_mead.hpp"
#include "hazsmooth/ph2d.hpp"
#include "hazsmooth/rng.hpp"
#include "hazsmooth/simulate.hpp"
#include "hazsmooth/types.hpp"
#include "hazsmooth/version.hpp"
