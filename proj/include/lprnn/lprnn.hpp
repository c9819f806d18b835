#pragma once

#include "lprnn/accounting.hpp"
#include "lprnn/checkpoint.hpp"
#include "lprnn/config.hpp"
#include "lprnn/corpus.hpp"
#include "lprnn/errors.hpp"
#include "lprnn/experiment.hpp"
#include "lprnn/lstm_lm.hpp"
#include "lprnn/model_spec.hpp"
#include "lprnn/packed.hpp"
#include "lprnn/quantization.hpp"
#include "lprnn/sweep.hpp"
#include "lprnn/tensor.hpp"
#include "lprnn/training.hpp"
#include "lprnn/whatif.hpp"
#include "lprnn/widening.hpp"
