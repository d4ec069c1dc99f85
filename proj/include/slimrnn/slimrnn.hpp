// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "slimrnn/errors.hpp"
#include "slimrnn/numerics.hpp"
#include "slimrnn/rng.hpp"
#include "slimrnn/taxonomy.hpp"
#include "slimrnn/cell.hpp"
#include "slimrnn/gradcheck.hpp"
#include "slimrnn/tasks.hpp"
#include "slimrnn/losses.hpp"
#include "slimrnn/optim.hpp"
#include "slimrnn/train.hpp"
#include "slimrnn/config.hpp"
#include "slimrnn/checkpoint.hpp"
#include "slimrnn/experiment.hpp"
