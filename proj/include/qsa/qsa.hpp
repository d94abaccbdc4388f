#pragma once

#include "qsa/analysis.hpp"
#include "qsa/attention.hpp"
#include "qsa/bench.hpp"
#include "qsa/costs.hpp"
#include "qsa/errors.hpp"
#include "qsa/gradcheck.hpp"
#include "qsa/layers.hpp"
#include "qsa/qtb.hpp"
#include "qsa/qtensor.hpp"
#include "qsa/quaternion.hpp"
#include "qsa/report.hpp"
#include "qsa/rng.hpp"
