#pragma once

#include "pearl/core.hpp"
#include "pearl/engine.hpp"
#include "pearl/io.hpp"
#include "pearl/linalg.hpp"
#include "pearl/parallel.hpp"
#include "pearl/parameters.hpp"
#include "pearl/problems.hpp"
#include "pearl/schedule.hpp"
#include "pearl/verify.hpp"
