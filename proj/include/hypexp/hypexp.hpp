#pragma once

#include "hypexp/bump.hpp"
#include "hypexp/cat_suspension.hpp"
#include "hypexp/config.hpp"
#include "hypexp/errors.hpp"
#include "hypexp/geodesic_surface.hpp"
#include "hypexp/gibbs.hpp"
#include "hypexp/lyapunov.hpp"
#include "hypexp/parallel.hpp"
#include "hypexp/perturbation.hpp"
#include "hypexp/rng.hpp"
#include "hypexp/splitting.hpp"
#include "hypexp/stats.hpp"
#include "hypexp/system.hpp"
