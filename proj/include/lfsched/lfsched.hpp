#pragma once

#include "lfsched/random.hpp"
#include "lfsched/scenario.hpp"
#include "lfsched/factory.hpp"
#include "lfsched/simulator.hpp"
#include "lfsched/guard.hpp"
#include "lfsched/nn.hpp"
#include "lfsched/policy.hpp"
#include "lfsched/agents.hpp"
#include "lfsched/baselines.hpp"
#include "lfsched/learner.hpp"
#include "lfsched/metrics.hpp"
