#pragma once

#include "synthlat/errors.hpp"
#include "synthlat/format.hpp"
#include "synthlat/parallel.hpp"
#include "synthlat/lattice.hpp"
#include "synthlat/lattice_io.hpp"
#include "synthlat/scattering.hpp"
#include "synthlat/creutz.hpp"
#include "synthlat/traces.hpp"
#include "synthlat/trace_io.hpp"
#include "synthlat/model.hpp"
#include "synthlat/least_squares.hpp"
#include "synthlat/global_fit.hpp"
