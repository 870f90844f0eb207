#pragma once

#include "ecg/core_linalg.hpp"
#include "ecg/partition.hpp"
#include "ecg/comm_plan.hpp"
#include "ecg/virtual_cluster.hpp"
#include "ecg/solvers.hpp"
#include "ecg/perf_models.hpp"
#include "ecg/problems.hpp"
#include "ecg/tuning.hpp"
#include "ecg/json_io.hpp"
#include "ecg/bench.hpp"
