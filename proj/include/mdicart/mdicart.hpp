#pragma once

#include "mdicart/cart.hpp"
#include "mdicart/dataset.hpp"
#include "mdicart/experiments.hpp"
#include "mdicart/forest.hpp"
#include "mdicart/geometry.hpp"
#include "mdicart/mdi.hpp"
#include "mdicart/oracle.hpp"
#include "mdicart/rng.hpp"
#include "mdicart/synthdata.hpp"
#include "mdicart/version.hpp"
