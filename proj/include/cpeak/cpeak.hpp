#pragma once

#include "cpeak/config.hpp"
#include "cpeak/domain.hpp"
#include "cpeak/errors.hpp"
#include "cpeak/eval.hpp"
#include "cpeak/neural.hpp"
#include "cpeak/oracle.hpp"
#include "cpeak/reward.hpp"
#include "cpeak/rng.hpp"
#include "cpeak/sampler.hpp"
