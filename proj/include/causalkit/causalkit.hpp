#pragma once

#include "causalkit/causal.hpp"
#include "causalkit/dataset.hpp"
#include "causalkit/discovery.hpp"
#include "causalkit/features.hpp"
#include "causalkit/gaussian_model.hpp"
#include "causalkit/graph.hpp"
#include "causalkit/linalg.hpp"
#include "causalkit/rng.hpp"
#include "causalkit/simulator.hpp"
