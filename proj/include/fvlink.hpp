#pragma once

#include "fvlink/adapters.hpp"
#include "fvlink/autodiff.hpp"
#include "fvlink/config.hpp"
#include "fvlink/datamodel.hpp"
#include "fvlink/errors.hpp"
#include "fvlink/eval.hpp"
#include "fvlink/fusion.hpp"
#include "fvlink/heads.hpp"
#include "fvlink/losses.hpp"
#include "fvlink/model.hpp"
#include "fvlink/rng.hpp"
#include "fvlink/synthgen.hpp"
#include "fvlink/tensor.hpp"
#include "fvlink/textio.hpp"
#include "fvlink/training.hpp"
