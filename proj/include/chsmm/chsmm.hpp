#pragma once

#include "chsmm/config.hpp"
#include "chsmm/csv.hpp"
#include "chsmm/error.hpp"
#include "chsmm/evaluate.hpp"
#include "chsmm/forecast.hpp"
#include "chsmm/ingest.hpp"
#include "chsmm/mnlr.hpp"
#include "chsmm/model.hpp"
#include "chsmm/model_io.hpp"
#include "chsmm/parallel.hpp"
#include "chsmm/plot.hpp"
#include "chsmm/rng.hpp"
#include "chsmm/simulate.hpp"
#include "chsmm/state_abstraction.hpp"
#include "chsmm/time.hpp"
