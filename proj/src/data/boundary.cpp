#include "tbnet/data/boundary.hpp"

namespace tbnet {

BinaryMap extract_boundary(const LabelMap& labels) {
  BinaryMap out(labels.height, labels.width, 0);
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const auto c = labels(y, x);
      const bool edge = (y > 0 && labels(y - 1, x) != c) || (y + 1 < labels.height && labels(y + 1, x) != c) ||
                        (x > 0 && labels(y, x - 1) != c) || (x + 1 < labels.width && labels(y, x + 1) != c);
      out(y, x) = edge ? 1 : 0;
    }
  return out;
}

}  // namespace tbnet
