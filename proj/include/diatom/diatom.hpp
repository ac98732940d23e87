#pragma once

#include "diatom/model.hpp"
#include "diatom/parameter_file.hpp"
#include "diatom/ode.hpp"
#include "diatom/trajectory_io.hpp"
#include "diatom/diagnostics.hpp"
#include "diatom/identification.hpp"
#include "diatom/harness.hpp"
