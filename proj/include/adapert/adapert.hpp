#ifndef ADAPERT_ADAPERT_HPP
#define ADAPERT_ADAPERT_HPP

/// Umbrella header.

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "degs.hpp"
#include "embeddings.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "grad_check.hpp"
#include "graph.hpp"
#include "loss.hpp"
#include "matrix.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"
#include "synth.hpp"
#include "tape.hpp"
#include "text.hpp"
#include "training.hpp"

#endif
