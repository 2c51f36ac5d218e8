#pragma once

#include "oada/fcoslite/assign.hpp"
#include "oada/fcoslite/checkpoint.hpp"
#include "oada/fcoslite/config.hpp"
#include "oada/fcoslite/decode.hpp"
#include "oada/fcoslite/evaluate.hpp"
#include "oada/fcoslite/loss.hpp"
#include "oada/fcoslite/model.hpp"
#include "oada/fcoslite/optimizer.hpp"
