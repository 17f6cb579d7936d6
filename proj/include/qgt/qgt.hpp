#pragma once

#include "qgt/core.hpp"
#include "qgt/feasibility.hpp"
#include "qgt/rtg.hpp"
#include "qgt/strategies.hpp"
#include "qgt/splitting.hpp"
#include "qgt/dataset.hpp"
#include "qgt/bridge.hpp"
#include "qgt/bench.hpp"
