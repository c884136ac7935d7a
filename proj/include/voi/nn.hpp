#pragma once

#include "voi/nn/adam.hpp"
#include "voi/nn/checkpoint.hpp"
#include "voi/nn/gradcheck.hpp"
#include "voi/nn/layers.hpp"
#include "voi/nn/ops.hpp"
#include "voi/nn/tape.hpp"
#include "voi/nn/tensor.hpp"
