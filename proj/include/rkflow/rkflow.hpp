#pragma once

#include "rkflow/dataset.hpp"
#include "rkflow/diagnostics.hpp"
#include "rkflow/embedding.hpp"
#include "rkflow/errors.hpp"
#include "rkflow/experiment.hpp"
#include "rkflow/flow.hpp"
#include "rkflow/kernels.hpp"
#include "rkflow/rff.hpp"
#include "rkflow/rng.hpp"
#include "rkflow/trainer.hpp"
