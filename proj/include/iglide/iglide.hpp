#pragma once

// Umbrella header for the full pipeline.

#include "iglide/csv.hpp"
#include "iglide/data.hpp"
#include "iglide/errors.hpp"
#include "iglide/forest.hpp"
#include "iglide/model.hpp"
#include "iglide/nn.hpp"
#include "iglide/pipeline.hpp"
#include "iglide/plot.hpp"
#include "iglide/rapp.hpp"
#include "iglide/rng.hpp"
#include "iglide/serialize.hpp"
#include "iglide/synthetic.hpp"
#include "iglide/uq.hpp"
