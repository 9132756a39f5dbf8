#pragma once

#include "vfl/core.hpp"
#include "vfl/fft.hpp"
#include "vfl/kernel.hpp"
#include "vfl/noise.hpp"
#include "vfl/output.hpp"
#include "vfl/parallel.hpp"
#include "vfl/particles.hpp"
#include "vfl/rng.hpp"
#include "vfl/runs.hpp"
#include "vfl/scenario.hpp"
#include "vfl/sigma.hpp"
#include "vfl/spde.hpp"
#include "vfl/spectral.hpp"
#include "vfl/stats.hpp"
#include "vfl/studies.hpp"
#include "vfl/torus.hpp"
#include "vfl/trig.hpp"
