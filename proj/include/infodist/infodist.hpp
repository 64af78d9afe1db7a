#pragma once

#include "infodist/centrality_selector.hpp"
#include "infodist/community_optimizer.hpp"
#include "infodist/distilled_trainer.hpp"
#include "infodist/embedding_io.hpp"
#include "infodist/eval_metrics.hpp"
#include "infodist/graph_builder.hpp"
#include "infodist/map_equation.hpp"
#include "infodist/pipeline.hpp"
