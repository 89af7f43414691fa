#pragma once

#include "synlab/config.hpp"
#include "synlab/error.hpp"
#include "synlab/evaluator.hpp"
#include "synlab/factor_space.hpp"
#include "synlab/harness.hpp"
#include "synlab/random.hpp"
#include "synlab/report.hpp"
#include "synlab/serialization.hpp"
#include "synlab/synthesizer.hpp"
#include "synlab/trainer.hpp"
