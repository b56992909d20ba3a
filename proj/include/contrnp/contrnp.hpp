#pragma once

#include "contrnp/error.hpp"
#include "contrnp/tensor.hpp"
#include "contrnp/ops.hpp"
#include "contrnp/data.hpp"
#include "contrnp/model.hpp"
#include "contrnp/objectives.hpp"
#include "contrnp/optim.hpp"
#include "contrnp/hash.hpp"
#include "contrnp/checkpoint.hpp"
#include "contrnp/trainer.hpp"
#include "contrnp/evaluation.hpp"
#include "contrnp/config.hpp"
