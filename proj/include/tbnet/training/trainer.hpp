#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "tbnet/core/config.hpp"
#include "tbnet/core/sample.hpp"
#include "tbnet/core/taxonomy.hpp"
#include "tbnet/data/class_weights.hpp"
#include "tbnet/losses/losses.hpp"
#include "tbnet/metrics/metrics.hpp"
#include "tbnet/network/tbnet.hpp"
#include "tbnet/training/optimizer.hpp"

namespace tbnet {

/// Everything needed to continue or evaluate a run.
struct TrainState {
  TrainConfig config;
  AblationFlags flags;
  ClassTaxonomy taxonomy = ClassTaxonomy::pavement();
  ClassWeights class_weights;
  std::unique_ptr<TBNet> net;
  std::unique_ptr<RMSProp> optimizer;
  /// Epoch in progress and the batch within it where training resumes.
  int epoch = 0;
  int batch_in_epoch = 0;
  /// Optimizer steps taken so far.
  int step = 0;
  /// Best validation mIoU seen; negative before the first validation.
  double best_val_miou = -1.0;

  /// Weighting mode after applying the class-weighting ablation.
  WeightingMode effective_weighting() const;
};

/// Fresh network and optimizer. Class weights come from `train`.
/// Throws ConfigError listing every violated invariant of `cfg`.
TrainState init_state(const TrainConfig& cfg, const AblationFlags& flags, const ClassTaxonomy& taxonomy,
                      const Dataset& train);

struct StepRecord {
  int step = 0;  // 1-based
  int epoch = 0;
  LossReport loss;
  double learning_rate = 0;
};

struct TrainOptions {
  /// When set: train_log.jsonl, checkpoint_last.bin and checkpoint_best.bin
  /// are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const StepRecord&)> on_step;
  std::function<void(int epoch, const MetricsReport&)> on_validate;
};

/// Runs from the state's current position until cfg.epochs are complete or
/// cfg.max_steps total steps have been taken. Samples whose size differs from
/// the configured input size are resized. Throws NumericError naming the step
/// when the loss stops being finite.
void train(TrainState& state, const Dataset& train_data, const Dataset* val_data = nullptr,
           const TrainOptions& options = {});

/// Frozen-parameter evaluation. Throws ConfigConflictError when a sample size
/// differs from the state's input size.
MetricsReport evaluate(TrainState& state, const Dataset& data);
ConfusionMatrix confusion(TrainState& state, const Dataset& data);

struct Prediction {
  LabelMap labels;
  Grid<double> boundary;  // empty when the boundary stream is disabled
};

/// Any image size; it is resized to the input size and outputs are resized back.
Prediction predict(TrainState& state, const Image& image);

/// Argmax over channels of image n of an (N, C, H, W) tensor; ties go to the
/// lowest class id.
LabelMap argmax_labels(const Tensor& probs, int n = 0);

}  // namespace tbnet
