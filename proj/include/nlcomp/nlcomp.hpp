/// @file nlcomp.hpp
/// @brief Umbrella header.
#pragma once

#include "nlcomp/errors.hpp"
#include "nlcomp/fields.hpp"
#include "nlcomp/grid.hpp"
#include "nlcomp/io.hpp"
#include "nlcomp/levy.hpp"
#include "nlcomp/linalg.hpp"
#include "nlcomp/moreau.hpp"
#include "nlcomp/nonlocal.hpp"
#include "nlcomp/parallel.hpp"
#include "nlcomp/solver.hpp"
#include "nlcomp/viscosity.hpp"
