#pragma once

#include "oms/error.hpp"
#include "oms/geometry.hpp"
#include "oms/gmm.hpp"
#include "oms/ingest.hpp"
#include "oms/memory.hpp"
#include "oms/model_io.hpp"
#include "oms/search.hpp"
#include "oms/sim.hpp"
#include "oms/sim_config.hpp"
#include "oms/view_io.hpp"
