#pragma once

#include <cstdint>
#include <vector>

#include "tbnet/core/sample.hpp"

namespace tbnet {

/// Inverse pixel-frequency class weights.
///   raw[c]        = total pixels / pixels of class c   (0 for absent classes)
///   normalized[c] = raw[c] / sum(raw)
struct ClassWeights {
  std::vector<double> raw;
  std::vector<double> normalized;

  int num_classes() const { return static_cast<int>(normalized.size()); }
  static ClassWeights uniform(int num_classes);
  static ClassWeights from_counts(const std::vector<std::uint64_t>& pixel_counts);
};

std::vector<std::uint64_t> class_pixel_counts(const Dataset& data, int num_classes);

/// Throws ConfigError on an empty dataset.
ClassWeights compute_class_weights(const Dataset& train, int num_classes);

}  // namespace tbnet
