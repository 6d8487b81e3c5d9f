#ifndef RRL_RRL_HPP
#define RRL_RRL_HPP

#include "rrl/bc.hpp"
#include "rrl/config.hpp"
#include "rrl/dataset.hpp"
#include "rrl/envs.hpp"
#include "rrl/experiment.hpp"
#include "rrl/metrics.hpp"
#include "rrl/nn.hpp"
#include "rrl/policies.hpp"
#include "rrl/replay.hpp"
#include "rrl/rng.hpp"
#include "rrl/sac.hpp"
#include "rrl/uncertainty.hpp"

#endif
