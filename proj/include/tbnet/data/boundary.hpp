#pragma once

#include "tbnet/core/sample.hpp"

namespace tbnet {

/// Binary boundary target from a label map: a pixel is 1 iff any in-bounds
/// 4-neighbor carries a different class id.
BinaryMap extract_boundary(const LabelMap& labels);

}  // namespace tbnet
