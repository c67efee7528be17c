#pragma once

#include "depthflow/block.hpp"
#include "depthflow/checkpoint.hpp"
#include "depthflow/dmd.hpp"
#include "depthflow/error.hpp"
#include "depthflow/linalg.hpp"
#include "depthflow/metrics.hpp"
#include "depthflow/model.hpp"
#include "depthflow/partition.hpp"
#include "depthflow/phase_seg.hpp"
#include "depthflow/report.hpp"
#include "depthflow/rng.hpp"
#include "depthflow/surrogate.hpp"
#include "depthflow/synthetic.hpp"
#include "depthflow/trajectory.hpp"
