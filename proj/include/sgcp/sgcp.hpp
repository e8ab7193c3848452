#pragma once

#include "sgcp/autodiff.hpp"
#include "sgcp/common.hpp"
#include "sgcp/domain.hpp"
#include "sgcp/elbo.hpp"
#include "sgcp/events.hpp"
#include "sgcp/experiment.hpp"
#include "sgcp/gp.hpp"
#include "sgcp/io.hpp"
#include "sgcp/kernel.hpp"
#include "sgcp/metrics.hpp"
#include "sgcp/model.hpp"
#include "sgcp/rng.hpp"
#include "sgcp/simulate.hpp"
#include "sgcp/special.hpp"
#include "sgcp/train.hpp"
#include "sgcp/truncnorm.hpp"
#include "sgcp/variational.hpp"
