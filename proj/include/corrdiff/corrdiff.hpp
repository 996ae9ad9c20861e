#pragma once

#include "corrdiff/corr_core.hpp"
#include "corrdiff/harness.hpp"
#include "corrdiff/null_dist.hpp"
#include "corrdiff/perm_engine.hpp"
#include "corrdiff/sim_models.hpp"
#include "corrdiff/storey.hpp"
#include "corrdiff/test_stats.hpp"
#include "corrdiff/threshold_power.hpp"
#include "corrdiff/pipeline/batch.hpp"
#include "corrdiff/pipeline/fdr.hpp"
#include "corrdiff/pipeline/io.hpp"
#include "corrdiff/pipeline/summary.hpp"
#include "corrdiff/pipeline/synthetic.hpp"
