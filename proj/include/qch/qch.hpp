#pragma once

#include "qch/causet.hpp"
#include "qch/channels.hpp"
#include "qch/discretization.hpp"
#include "qch/errors.hpp"
#include "qch/history_mps.hpp"
#include "qch/io.hpp"
#include "qch/linalg.hpp"
#include "qch/random.hpp"
#include "qch/superstate.hpp"
