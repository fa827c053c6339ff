#pragma once

#include "dtc/rational.hpp"
#include "dtc/model.hpp"
#include "dtc/equilibrium.hpp"
#include "dtc/forecast.hpp"
#include "dtc/dynamics.hpp"
#include "dtc/verification.hpp"
#include "dtc/harness.hpp"
