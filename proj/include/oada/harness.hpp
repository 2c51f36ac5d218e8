#pragma once

#include "oada/harness/ablation.hpp"
#include "oada/harness/config.hpp"
#include "oada/harness/data.hpp"
#include "oada/harness/metrics.hpp"
#include "oada/harness/self_train.hpp"
#include "oada/harness/tools.hpp"
#include "oada/harness/train.hpp"
