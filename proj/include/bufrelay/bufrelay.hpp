#pragma once

#include "bufrelay/channel.hpp"
#include "bufrelay/closed_form.hpp"
#include "bufrelay/errors.hpp"
#include "bufrelay/policies.hpp"
#include "bufrelay/quadrature.hpp"
#include "bufrelay/relay_buffer.hpp"
#include "bufrelay/roots.hpp"
#include "bufrelay/simulator.hpp"
#include "bufrelay/solvers.hpp"
#include "bufrelay/special_functions.hpp"
