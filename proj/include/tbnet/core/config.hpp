#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace tbnet {

/// How the segmentation cross-entropy weights each pixel.
///  - per_pixel: every pixel weighted by the normalized weight of its true class.
///  - per_image: one weight per image, the sum of class weights over its pixels,
///    multiplying that image's unweighted cross-entropy (literal reading).
///  - none: plain cross-entropy.
enum class WeightingMode { PerPixel, PerImage, None };

/// mean divides sums by the pixel count (and batch) so the loss magnitude does
/// not depend on resolution; sum keeps the raw sums of the loss equations.
enum class Reduction { Mean, Sum };

/// What the fusion stage takes from the boundary stream.
enum class BoundarySource { Features, Map };

struct AblationFlags {
  bool use_caa = true;
  bool use_boundary_stream = true;
  bool use_class_weighting = true;

  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  int input_height = 512;
  int input_width = 512;
  double learning_rate = 1e-4;
  /// Squared-gradient EMA decay of the RMSProp accumulator.
  double decay = 0.995;
  /// Multiplicative learning-rate decay applied once per epoch; 1 disables it.
  double lr_epoch_decay = 1.0;
  double rms_epsilon = 1e-10;
  int epochs = 150;
  /// Stop after this many optimizer steps; 0 means run all epochs.
  int max_steps = 0;
  double lambda_seg = 1.0;
  double lambda_boundary = 1.0;
  WeightingMode weighting_mode = WeightingMode::PerPixel;
  Reduction loss_reduction = Reduction::Mean;
  std::uint64_t seed = 0;
  int batch_size = 2;
  /// Every layer's filter count is divided by this (minimum 1 filter).
  int width_divisor = 1;
  std::array<int, 4> backbone_blocks{3, 4, 23, 3};
  /// Depth of the 1x1 projections applied to the backbone features.
  int context_depth = 512;
  /// Largest spatial size L = H*W accepted by an attention module.
  int caa_max_positions = 4096;
  BoundarySource fusion_boundary_source = BoundarySource::Features;
  double bn_momentum = 0.1;
  /// Validate every this many epochs when a validation set is present.
  int val_every = 1;

  /// 128x128 inputs, width divisor 8, batch 2.
  static TrainConfig desk();

  bool operator==(const TrainConfig&) const = default;
};

/// Empty iff every invariant holds. Never throws.
std::vector<std::string> validate_config(const TrainConfig& cfg);

/// Flat `key = value` text, one field per line.
std::string to_text(const TrainConfig& cfg);
std::string to_text(const AblationFlags& flags);

/// Every TrainConfig key in to_text order.
std::vector<std::string> config_keys();

/// Applies a single key/value pair; throws ConfigError on unknown keys or
/// unparsable values. Returns false if the key belongs to neither structure.
bool apply_setting(TrainConfig& cfg, AblationFlags* flags, const std::string& key,
                   const std::string& value);

/// Parses text produced by to_text (comments with '#', blank lines allowed).
/// Fields absent from the text keep their defaults.
TrainConfig config_from_text(const std::string& text, AblationFlags* flags = nullptr);

TrainConfig load_config_file(const std::string& path, AblationFlags* flags = nullptr);
void save_config_file(const std::string& path, const TrainConfig& cfg,
                      const AblationFlags* flags = nullptr);

std::string to_string(WeightingMode mode);
std::string to_string(Reduction reduction);
std::string to_string(BoundarySource source);
WeightingMode parse_weighting_mode(const std::string& text);
Reduction parse_reduction(const std::string& text);
BoundarySource parse_boundary_source(const std::string& text);

}  // namespace tbnet
