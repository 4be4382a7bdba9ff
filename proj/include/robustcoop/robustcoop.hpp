#pragma once

#include "robustcoop/adapt_dqn.hpp"
#include "robustcoop/adapt_pool.hpp"
#include "robustcoop/config.hpp"
#include "robustcoop/environments.hpp"
#include "robustcoop/errors.hpp"
#include "robustcoop/harness.hpp"
#include "robustcoop/inference.hpp"
#include "robustcoop/mdp.hpp"
#include "robustcoop/parametric.hpp"
#include "robustcoop/rng.hpp"
#include "robustcoop/serialization.hpp"
