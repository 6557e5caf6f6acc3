#pragma once

#include "apgf/adam.hpp"
#include "apgf/error.hpp"
#include "apgf/graph.hpp"
#include "apgf/model.hpp"
#include "apgf/oracle.hpp"
#include "apgf/parallel.hpp"
#include "apgf/random.hpp"
#include "apgf/rollout.hpp"
#include "apgf/svg.hpp"
#include "apgf/tape.hpp"
#include "apgf/tensor.hpp"
#include "apgf/trainer.hpp"
