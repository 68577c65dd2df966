#pragma once

#include "ruinsim/arrival_models.hpp"
#include "ruinsim/asymptotics.hpp"
#include "ruinsim/claim_models.hpp"
#include "ruinsim/config.hpp"
#include "ruinsim/estimators.hpp"
#include "ruinsim/parallel.hpp"
#include "ruinsim/quadrature.hpp"
#include "ruinsim/rare_sets.hpp"
#include "ruinsim/risk_sim.hpp"
#include "ruinsim/rng.hpp"
#include "ruinsim/runner.hpp"
