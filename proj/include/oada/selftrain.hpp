#pragma once

#include "oada/selftrain/augment.hpp"
#include "oada/selftrain/step.hpp"
#include "oada/selftrain/teacher.hpp"
