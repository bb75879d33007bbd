#pragma once

#include "sspod/config.hpp"
#include "sspod/ensemble.hpp"
#include "sspod/errors.hpp"
#include "sspod/io.hpp"
#include "sspod/parallel.hpp"
#include "sspod/pipeline.hpp"
#include "sspod/problems.hpp"
#include "sspod/random.hpp"
#include "sspod/rom.hpp"
#include "sspod/sampler.hpp"
#include "sspod/subspace.hpp"
#include "sspod/training.hpp"
