#pragma once

#include "iae/error.hpp"
#include "iae/dataset.hpp"
#include "iae/regress.hpp"
#include "iae/metrics.hpp"
#include "iae/parallel.hpp"
#include "iae/mechanisms.hpp"
#include "iae/config.hpp"
#include "iae/harness.hpp"
