#pragma once

#include "oada/align/adversarial.hpp"
#include "oada/align/binning.hpp"
#include "oada/align/conditioning.hpp"
#include "oada/align/diagnostics.hpp"
#include "oada/align/mask.hpp"
