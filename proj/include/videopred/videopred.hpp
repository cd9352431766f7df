#pragma once

#include "videopred/checkpoint.hpp"
#include "videopred/common.hpp"
#include "videopred/config.hpp"
#include "videopred/conv_lstm.hpp"
#include "videopred/dataset.hpp"
#include "videopred/evaluation.hpp"
#include "videopred/graph.hpp"
#include "videopred/metrics.hpp"
#include "videopred/model.hpp"
#include "videopred/motion.hpp"
#include "videopred/ops.hpp"
#include "videopred/png_io.hpp"
#include "videopred/tensor.hpp"
#include "videopred/training.hpp"
#include "videopred/world.hpp"
