#pragma once

#include "strl/error.hpp"
#include "strl/numeric.hpp"
#include "strl/rng.hpp"
#include "strl/dataset.hpp"
#include "strl/sim.hpp"
#include "strl/glm.hpp"
#include "strl/shrinkage.hpp"
#include "strl/nuisance.hpp"
#include "strl/estimator.hpp"
#include "strl/delay_planner.hpp"
#include "strl/sensitivity.hpp"
#include "strl/io.hpp"
#include "strl/cli.hpp"
