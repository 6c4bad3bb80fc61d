// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fdm/adam.hpp"
#include "fdm/autodiff.hpp"
#include "fdm/checkpoint.hpp"
#include "fdm/config.hpp"
#include "fdm/coupling.hpp"
#include "fdm/data.hpp"
#include "fdm/error.hpp"
#include "fdm/interpolants.hpp"
#include "fdm/metrics.hpp"
#include "fdm/networks.hpp"
#include "fdm/param_store.hpp"
#include "fdm/rng.hpp"
#include "fdm/tape.hpp"
#include "fdm/tensor.hpp"
#include "fdm/trainer.hpp"
