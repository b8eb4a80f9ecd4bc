#pragma once

#include "mtc/augment.hpp"
#include "mtc/bpe.hpp"
#include "mtc/checkpoint.hpp"
#include "mtc/corpus.hpp"
#include "mtc/error.hpp"
#include "mtc/evaluate.hpp"
#include "mtc/labels.hpp"
#include "mtc/manifest.hpp"
#include "mtc/metrics.hpp"
#include "mtc/model.hpp"
#include "mtc/ops.hpp"
#include "mtc/optim.hpp"
#include "mtc/pipeline.hpp"
#include "mtc/rng.hpp"
#include "mtc/schedule.hpp"
#include "mtc/synth.hpp"
#include "mtc/tensor.hpp"
#include "mtc/train.hpp"
