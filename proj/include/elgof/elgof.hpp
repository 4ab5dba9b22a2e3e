#pragma once

#include "elgof/asymptotics.hpp"
#include "elgof/bootstrap.hpp"
#include "elgof/el_solver.hpp"
#include "elgof/errors.hpp"
#include "elgof/integrate.hpp"
#include "elgof/kernel.hpp"
#include "elgof/log.hpp"
#include "elgof/models.hpp"
#include "elgof/null_model.hpp"
#include "elgof/parallel.hpp"
#include "elgof/quadrature.hpp"
#include "elgof/rng.hpp"
#include "elgof/sample.hpp"
#include "elgof/simlab.hpp"
#include "elgof/smoothing.hpp"
#include "elgof/statistic.hpp"
#include "elgof/version.hpp"
