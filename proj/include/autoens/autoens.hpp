#pragma once

#include "autoens/error.hpp"
#include "autoens/rng.hpp"
#include "autoens/matrix.hpp"
#include "autoens/netcore.hpp"
#include "autoens/schedule.hpp"
#include "autoens/diversity.hpp"
#include "autoens/checkpoint.hpp"
#include "autoens/collect.hpp"
#include "autoens/ensemble.hpp"
#include "autoens/dataset.hpp"
#include "autoens/config.hpp"
#include "autoens/experiment.hpp"
