#pragma once

#include "bcsgap/config.hpp"
#include "bcsgap/errors.hpp"
#include "bcsgap/fixed_point.hpp"
#include "bcsgap/interpolation.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/roots.hpp"
#include "bcsgap/simplified_gap.hpp"
#include "bcsgap/validation.hpp"
