#pragma once

#include "moef/types.hpp"
#include "moef/linalg.hpp"
#include "moef/filter.hpp"
#include "moef/aggregation.hpp"
#include "moef/engine.hpp"
#include "moef/simulator.hpp"
#include "moef/metrics.hpp"
#include "moef/io.hpp"
