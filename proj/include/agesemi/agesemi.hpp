#pragma once

#include "agesemi/asymptotics.hpp"
#include "agesemi/density.hpp"
#include "agesemi/errors.hpp"
#include "agesemi/grid.hpp"
#include "agesemi/model.hpp"
#include "agesemi/oracle.hpp"
#include "agesemi/propagator.hpp"
#include "agesemi/resolvent.hpp"
#include "agesemi/semigroup.hpp"
#include "agesemi/spectral.hpp"
#include "agesemi/validate.hpp"
