#pragma once

#include <span>

#include "pvfd/params.hpp"
#include "pvfd/rng.hpp"

namespace pvfd {

// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
// fan_in is the product of all but the last dimension, fan_out the last.
void init_segment(std::span<double> flat, const ParamSegment& segment, Rng& rng);

}  // namespace pvfd
