#pragma once

#include "avgmart/averaging.hpp"
#include "avgmart/chain.hpp"
#include "avgmart/concentration.hpp"
#include "avgmart/error.hpp"
#include "avgmart/linear_analytics.hpp"
#include "avgmart/martingale.hpp"
#include "avgmart/model.hpp"
#include "avgmart/numerics.hpp"
#include "avgmart/rng.hpp"
#include "avgmart/simulate.hpp"
