#pragma once

#include "advecta/commands.hpp"
#include "advecta/config.hpp"
#include "advecta/dstm_filter.hpp"
#include "advecta/errors.hpp"
#include "advecta/estimator.hpp"
#include "advecta/galerkin_core.hpp"
#include "advecta/io.hpp"
#include "advecta/parallel.hpp"
#include "advecta/physical_fields.hpp"
#include "advecta/simulator.hpp"
#include "advecta/spectral_grid.hpp"
