#pragma once

// Umbrella header for the tandem-network library.

#include "tandem/analysis.hpp"
#include "tandem/blocks.hpp"
#include "tandem/checkpoint.hpp"
#include "tandem/config.hpp"
#include "tandem/datasets.hpp"
#include "tandem/error.hpp"
#include "tandem/layers.hpp"
#include "tandem/network.hpp"
#include "tandem/ops.hpp"
#include "tandem/rng.hpp"
#include "tandem/svd.hpp"
#include "tandem/tensor.hpp"
#include "tandem/trainer.hpp"
