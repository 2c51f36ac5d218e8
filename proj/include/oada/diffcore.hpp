#pragma once

#include "oada/diffcore/grad_check.hpp"
#include "oada/diffcore/ops.hpp"
#include "oada/diffcore/tape.hpp"
#include "oada/diffcore/tensor.hpp"
