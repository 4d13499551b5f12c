#pragma once

#include "bevalign/error.hpp"
#include "bevalign/util.hpp"
#include "bevalign/grid.hpp"
#include "bevalign/instance.hpp"
#include "bevalign/kd_index.hpp"
#include "bevalign/pairing.hpp"
#include "bevalign/contrastive.hpp"
#include "bevalign/alignfuse.hpp"
#include "bevalign/scenesim.hpp"
#include "bevalign/io.hpp"
#include "bevalign/oracles.hpp"
#include "bevalign/experiment.hpp"
