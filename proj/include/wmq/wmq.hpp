#pragma once

#include "wmq/error.hpp"
#include "wmq/rng.hpp"
#include "wmq/model_store.hpp"
#include "wmq/quantizer.hpp"
#include "wmq/allocation.hpp"
#include "wmq/toyworld.hpp"
#include "wmq/worldmodel.hpp"
#include "wmq/planner.hpp"
#include "wmq/stats.hpp"
#include "wmq/report.hpp"
#include "wmq/pipeline.hpp"
