#pragma once

#include "siita/config.hpp"
#include "siita/data.hpp"
#include "siita/error.hpp"
#include "siita/eval.hpp"
#include "siita/model.hpp"
#include "siita/optimizer.hpp"
#include "siita/runner.hpp"
#include "siita/streaming.hpp"
#include "siita/tensor.hpp"
