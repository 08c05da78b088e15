#pragma once

#include "viewex/checkpoint.hpp"
#include "viewex/config.hpp"
#include "viewex/csv.hpp"
#include "viewex/determinacy.hpp"
#include "viewex/error.hpp"
#include "viewex/experiment.hpp"
#include "viewex/explang.hpp"
#include "viewex/graph.hpp"
#include "viewex/io.hpp"
#include "viewex/model.hpp"
#include "viewex/perturb.hpp"
#include "viewex/planted.hpp"
#include "viewex/relstore.hpp"
#include "viewex/retrain.hpp"
#include "viewex/rng.hpp"
#include "viewex/search.hpp"
#include "viewex/tensor.hpp"
#include "viewex/train.hpp"
