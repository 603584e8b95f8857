#pragma once

#include "actpart/boundary.hpp"
#include "actpart/competition.hpp"
#include "actpart/core.hpp"
#include "actpart/data.hpp"
#include "actpart/harness.hpp"
#include "actpart/hyper_search.hpp"
#include "actpart/lifecycle.hpp"
#include "actpart/modular.hpp"
#include "actpart/nn.hpp"
#include "actpart/partition.hpp"
