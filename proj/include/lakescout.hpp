#pragma once

#include "lakescout/adam.hpp"
#include "lakescout/aggregation.hpp"
#include "lakescout/annindex.hpp"
#include "lakescout/autodiff.hpp"
#include "lakescout/benchmark.hpp"
#include "lakescout/binary_io.hpp"
#include "lakescout/corpus.hpp"
#include "lakescout/csv.hpp"
#include "lakescout/encoder.hpp"
#include "lakescout/error.hpp"
#include "lakescout/featurizer.hpp"
#include "lakescout/graph.hpp"
#include "lakescout/metrics.hpp"
#include "lakescout/model.hpp"
#include "lakescout/objectives.hpp"
#include "lakescout/params.hpp"
#include "lakescout/retrieval.hpp"
#include "lakescout/rng.hpp"
#include "lakescout/synthetic.hpp"
#include "lakescout/text.hpp"
#include "lakescout/trainer.hpp"
