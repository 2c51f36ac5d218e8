#pragma once

#include "oada/scenegen/dataset.hpp"
#include "oada/scenegen/generator.hpp"
#include "oada/scenegen/png_io.hpp"
#include "oada/scenegen/scene.hpp"
#include "oada/scenegen/shift.hpp"
