#pragma once

#include "eetr/checkpoint.hpp"
#include "eetr/config.hpp"
#include "eetr/corpus.hpp"
#include "eetr/encoder.hpp"
#include "eetr/entity.hpp"
#include "eetr/error.hpp"
#include "eetr/evaluation.hpp"
#include "eetr/heads.hpp"
#include "eetr/matrix.hpp"
#include "eetr/model.hpp"
#include "eetr/pipeline.hpp"
#include "eetr/random.hpp"
#include "eetr/search.hpp"
#include "eetr/stats.hpp"
#include "eetr/synthetic.hpp"
#include "eetr/trainer.hpp"
