#pragma once

#include "qdar/backtest.hpp"
#include "qdar/core.hpp"
#include "qdar/designs.hpp"
#include "qdar/diagnose.hpp"
#include "qdar/distributions.hpp"
#include "qdar/errors.hpp"
#include "qdar/estimate.hpp"
#include "qdar/io.hpp"
#include "qdar/rng.hpp"
#include "qdar/select.hpp"
#include "qdar/simulate.hpp"
#include "qdar/studies.hpp"
