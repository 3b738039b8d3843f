#pragma once

#include "invberge/cli.hpp"
#include "invberge/correspondence.hpp"
#include "invberge/distance.hpp"
#include "invberge/expr.hpp"
#include "invberge/fixedpoint.hpp"
#include "invberge/games.hpp"
#include "invberge/grid.hpp"
#include "invberge/io.hpp"
#include "invberge/parallel.hpp"
#include "invberge/synthesis.hpp"
