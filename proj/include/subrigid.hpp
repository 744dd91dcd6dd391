#pragma once

#include "subrigid/errors.hpp"
#include "subrigid/random.hpp"
#include "subrigid/graph.hpp"
#include "subrigid/rigidity.hpp"
#include "subrigid/subframework.hpp"
#include "subrigid/control.hpp"
#include "subrigid/localization.hpp"
#include "subrigid/simnet.hpp"
#include "subrigid/simulation.hpp"
#include "subrigid/experiment.hpp"
#include "subrigid/io.hpp"
