#include "tbnet/data/class_weights.hpp"

#include "tbnet/core/error.hpp"

namespace tbnet {

ClassWeights ClassWeights::uniform(int num_classes) {
  ClassWeights w;
  w.raw.assign(static_cast<std::size_t>(num_classes), 1.0);
  w.normalized.assign(static_cast<std::size_t>(num_classes), 1.0 / num_classes);
  return w;
}

ClassWeights ClassWeights::from_counts(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ConfigError("class weights need at least one labelled pixel");
  ClassWeights w;
  w.raw.resize(counts.size());
  double sum = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    // Absent classes get weight 0 and stay out of the normalization sum.
    w.raw[c] = counts[c] == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(counts[c]);
    sum += w.raw[c];
  }
  w.normalized.resize(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) w.normalized[c] = w.raw[c] / sum;
  return w;
}

std::vector<std::uint64_t> class_pixel_counts(const Dataset& data, int num_classes) {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (const auto& s : data.samples)
    for (auto v : s.labels.values) {
      if (v >= num_classes) throw ValidationError("sample " + s.id + ": label outside taxonomy");
      ++counts[v];
    }
  return counts;
}

ClassWeights compute_class_weights(const Dataset& train, int num_classes) {
  if (train.empty()) throw ConfigError("cannot compute class weights from an empty training set");
  return ClassWeights::from_counts(class_pixel_counts(train, num_classes));
}

}  // namespace tbnet
