#pragma once

#include "pacrank/benchmark.hpp"
#include "pacrank/data.hpp"
#include "pacrank/ep_common.hpp"
#include "pacrank/ep_gaussian.hpp"
#include "pacrank/ep_spike_slab.hpp"
#include "pacrank/errors.hpp"
#include "pacrank/gp.hpp"
#include "pacrank/model.hpp"
#include "pacrank/normal.hpp"
#include "pacrank/risk.hpp"
#include "pacrank/smc.hpp"
#include "pacrank/targets.hpp"
#include "pacrank/tuning.hpp"
