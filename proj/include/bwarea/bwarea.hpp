// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "bwarea/checkpoint.hpp"
#include "bwarea/data.hpp"
#include "bwarea/environments.hpp"
#include "bwarea/evaluation.hpp"
#include "bwarea/generation.hpp"
#include "bwarea/gradcheck.hpp"
#include "bwarea/kernels.hpp"
#include "bwarea/layers.hpp"
#include "bwarea/models.hpp"
#include "bwarea/ops.hpp"
#include "bwarea/optimizer.hpp"
#include "bwarea/quantize.hpp"
#include "bwarea/random.hpp"
#include "bwarea/runtime.hpp"
#include "bwarea/synthetic.hpp"
#include "bwarea/tensor.hpp"
#include "bwarea/training.hpp"
