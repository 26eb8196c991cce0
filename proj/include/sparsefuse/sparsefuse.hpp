#ifndef SPARSEFUSE_SPARSEFUSE_HPP
#define SPARSEFUSE_SPARSEFUSE_HPP

#include "bench.hpp"
#include "dag.hpp"
#include "executor.hpp"
#include "fixtures.hpp"
#include "kernels.hpp"
#include "lbc.hpp"
#include "matrix.hpp"
#include "matrix_market.hpp"
#include "msp.hpp"
#include "schedule_json.hpp"
#include "types.hpp"

#endif
