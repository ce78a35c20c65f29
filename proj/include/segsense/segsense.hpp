#pragma once

#include "segsense/csv.hpp"
#include "segsense/errors.hpp"
#include "segsense/evaluate.hpp"
#include "segsense/external.hpp"
#include "segsense/fitting.hpp"
#include "segsense/image_io.hpp"
#include "segsense/mask.hpp"
#include "segsense/metrics.hpp"
#include "segsense/partition.hpp"
#include "segsense/report.hpp"
#include "segsense/rng.hpp"
#include "segsense/stats.hpp"
#include "segsense/sweep.hpp"
#include "segsense/sweep_io.hpp"
#include "segsense/synthetic.hpp"
#include "segsense/volume.hpp"
#include "segsense/volume_io.hpp"
