#pragma once

#include "shoelace/errors.hpp"
#include "shoelace/coupled_mode.hpp"
#include "shoelace/trim_planner.hpp"
#include "shoelace/s21_fitter.hpp"
#include "shoelace/transmon_trim.hpp"
#include "shoelace/readout_sim.hpp"
#include "shoelace/registry.hpp"
#include "shoelace/io.hpp"
