// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "koopman_reach/errors.hpp"
#include "koopman_reach/interval.hpp"
#include "koopman_reach/linalg.hpp"
#include "koopman_reach/halfspace.hpp"
#include "koopman_reach/lp.hpp"
#include "koopman_reach/expr.hpp"
#include "koopman_reach/tape.hpp"
#include "koopman_reach/models.hpp"
#include "koopman_reach/observables.hpp"
#include "koopman_reach/koopman.hpp"
#include "koopman_reach/sets.hpp"
#include "koopman_reach/deltasat.hpp"
#include "koopman_reach/verify.hpp"
#include "koopman_reach/config.hpp"
#include "koopman_reach/cli.hpp"
