#pragma once

#include "oada/svdstats/features.hpp"
#include "oada/svdstats/report.hpp"
#include "oada/svdstats/spectrum.hpp"
#include "oada/svdstats/svd.hpp"
