#pragma once

#include "fairscope/density.hpp"
#include "fairscope/design.hpp"
#include "fairscope/error.hpp"
#include "fairscope/fair.hpp"
#include "fairscope/forest.hpp"
#include "fairscope/hunting.hpp"
#include "fairscope/iamb.hpp"
#include "fairscope/io_json.hpp"
#include "fairscope/kendall.hpp"
#include "fairscope/knn.hpp"
#include "fairscope/linear.hpp"
#include "fairscope/logistic.hpp"
#include "fairscope/matching.hpp"
#include "fairscope/parallel.hpp"
#include "fairscope/plot.hpp"
#include "fairscope/rng.hpp"
#include "fairscope/stats.hpp"
#include "fairscope/svg.hpp"
#include "fairscope/table.hpp"
