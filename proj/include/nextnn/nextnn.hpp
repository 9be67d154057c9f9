#pragma once

#include "nextnn/baselines.hpp"
#include "nextnn/blocks.hpp"
#include "nextnn/common.hpp"
#include "nextnn/data_io.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/engine.hpp"
#include "nextnn/experiment.hpp"
#include "nextnn/loss.hpp"
#include "nextnn/metrics.hpp"
#include "nextnn/nn.hpp"
#include "nextnn/objectives.hpp"
#include "nextnn/quadratic.hpp"
#include "nextnn/surrogate.hpp"
#include "nextnn/topology.hpp"
