#pragma once

#include "bitcode.hpp"
#include "encoding.hpp"
#include "wnn.hpp"
#include "bucketing.hpp"
#include "baselines.hpp"
#include "dataset.hpp"
#include "bench.hpp"
