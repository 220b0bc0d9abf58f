#pragma once

#include "mpfa/baselines.hpp"
#include "mpfa/errors.hpp"
#include "mpfa/event_stream.hpp"
#include "mpfa/grad_check.hpp"
#include "mpfa/metrics.hpp"
#include "mpfa/model.hpp"
#include "mpfa/model_params.hpp"
#include "mpfa/optim.hpp"
#include "mpfa/param.hpp"
#include "mpfa/rng.hpp"
#include "mpfa/tape.hpp"
#include "mpfa/temporal_state.hpp"
#include "mpfa/tensor.hpp"
#include "mpfa/time_encoding.hpp"
#include "mpfa/train_eval.hpp"
