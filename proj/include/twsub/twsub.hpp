#pragma once

#include "twsub/bandwidth.hpp"
#include "twsub/error.hpp"
#include "twsub/io.hpp"
#include "twsub/linalg.hpp"
#include "twsub/panel.hpp"
#include "twsub/quantile.hpp"
#include "twsub/regression.hpp"
#include "twsub/simulation.hpp"
#include "twsub/statistics.hpp"
#include "twsub/subsample.hpp"
#include "twsub/variance.hpp"
