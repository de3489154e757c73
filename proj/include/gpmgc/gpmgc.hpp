#pragma once

#include "gpmgc/acquisition.hpp"
#include "gpmgc/benchmarks.hpp"
#include "gpmgc/box.hpp"
#include "gpmgc/cmaes.hpp"
#include "gpmgc/dependence.hpp"
#include "gpmgc/error.hpp"
#include "gpmgc/gp.hpp"
#include "gpmgc/harness.hpp"
#include "gpmgc/kernel.hpp"
#include "gpmgc/random.hpp"
#include "gpmgc/subprocess.hpp"
