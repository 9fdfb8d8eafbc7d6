#pragma once

// Umbrella header for the library; the CLI layer lives in fraclayer/cli.hpp.

#include "fraclayer/analysis.hpp"
#include "fraclayer/errors.hpp"
#include "fraclayer/extension.hpp"
#include "fraclayer/fraclap.hpp"
#include "fraclayer/heatlayer.hpp"
#include "fraclayer/layersolver.hpp"
#include "fraclayer/nonlinearity.hpp"
#include "fraclayer/parallel.hpp"
#include "fraclayer/profile.hpp"
#include "fraclayer/quadrature.hpp"
