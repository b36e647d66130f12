#pragma once

#include "cndkit/analyzer.hpp"
#include "cndkit/cnd_transform.hpp"
#include "cndkit/error.hpp"
#include "cndkit/graph_ir.hpp"
#include "cndkit/model_zoo.hpp"
#include "cndkit/pareto.hpp"
#include "cndkit/reports.hpp"
#include "cndkit/serialize.hpp"
