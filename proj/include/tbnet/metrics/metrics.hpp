#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tbnet/core/sample.hpp"
#include "tbnet/core/taxonomy.hpp"

namespace tbnet {

/// C x C pixel counts; entry (i, j) = pixels of true class i predicted as j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  /// Row-major counts[truth][pred]. Throws ShapeError unless square.
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::uint64_t>>& counts);

  int num_classes() const { return num_classes_; }
  std::uint64_t operator()(int truth, int pred) const {
    return counts_[static_cast<std::size_t>(truth) * num_classes_ + pred];
  }
  std::uint64_t total() const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t col_sum(int pred) const;

  void add(int truth, int pred, std::uint64_t n = 1);
  /// Throws ShapeError on size mismatch, ValidationError on ids >= C.
  void accumulate(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);
  void accumulate(const LabelMap& pred, const LabelMap& truth);
  /// Elementwise sum. Throws ShapeError on a different class count.
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct ClassMetrics {
  std::string name;
  std::optional<double> cpa;  // empty when the class has no true pixels
  std::optional<double> iou;  // empty when the class is absent from truth and prediction
  std::uint64_t support = 0;  // true pixels
};

struct MetricsReport {
  std::vector<ClassMetrics> classes;
  ClassId background_id = 0;
  /// Means over defined, non-background classes. Empty when none is defined.
  std::optional<double> mean_cpa;
  std::optional<double> mean_iou;

  /// Mean IoU or 0 when undefined.
  double miou() const { return mean_iou.value_or(0.0); }
  /// Machine-readable rows: name, cpa, iou, support; nulls for undefined.
  std::string to_json() const;
  /// Aligned table: one column per non-background class plus Mean.
  std::string to_table() const;
};

MetricsReport compute_metrics(const ConfusionMatrix& cm, const ClassTaxonomy& taxonomy);
/// Uses class names "class<i>" and background 0.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

}  // namespace tbnet
