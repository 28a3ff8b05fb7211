#pragma once

// Umbrella header for the dynamic portfolio choice library.

#include "dpo/errors.hpp"
#include "dpo/experiments.hpp"
#include "dpo/model.hpp"
#include "dpo/oracle.hpp"
#include "dpo/pamc.hpp"
#include "dpo/pricing.hpp"
#include "dpo/rng.hpp"
#include "dpo/selection.hpp"
#include "dpo/simplex.hpp"
#include "dpo/version.hpp"
