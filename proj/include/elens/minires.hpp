#pragma once

#include <cstdint>

#include "elens/model.hpp"

namespace elens {

// Small fixed residual architecture for 3x64x64 inputs:
// stem conv/relu/maxpool, two projection-shortcut residual blocks whose add
// inputs are both post-relu, global average pool, dense head. The block-2
// output relu ("blk2.relu2", 32x8x8) is the default excitation target.
// Weights are He-uniform, deterministic in the seed.
Model build_minires(int num_classes, uint64_t seed);

}  // namespace elens
