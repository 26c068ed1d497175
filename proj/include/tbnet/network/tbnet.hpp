#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>

#include "tbnet/core/config.hpp"
#include "tbnet/core/sample.hpp"
#include "tbnet/network/backbone.hpp"
#include "tbnet/network/modules.hpp"

namespace tbnet {

struct NetworkOptions {
  int num_classes = 9;
  int width_divisor = 1;
  std::array<int, 4> backbone_blocks{3, 4, 23, 3};
  int context_depth = 512;
  int caa_max_positions = 4096;
  BoundarySource fusion_boundary_source = BoundarySource::Features;
  double bn_momentum = 0.1;
  AblationFlags flags;

  static NetworkOptions from_config(const TrainConfig& cfg, const AblationFlags& flags, int num_classes);
};

/// A feature tensor together with its downsampling factor relative to the input.
struct FeatureMap {
  Var data;
  int stride = 1;
};

/// Dense outputs for a batch. boundary_prob is empty when the boundary stream
/// is disabled.
struct NetworkOutput {
  Tensor seg_logits;     // (N, C, H, W)
  Tensor seg_probs;      // (N, C, H, W), softmax over C
  Tensor boundary_prob;  // (N, 1, H, W) in [0, 1]
};

/// Graph-connected outputs used for training.
struct ForwardResult {
  Var seg_logits;
  Var seg_probs;
  Var boundary_prob;
};

/// Three 3x3/2 conv-BN-ReLU blocks, widths 64/128/256, output stride 8.
class SpatialStream {
 public:
  SpatialStream(ParameterSet& params, const std::string& prefix, int width_divisor, double momentum,
                std::mt19937_64& rng);
  FeatureMap operator()(const Var& image, bool training);
  int out_channels() const { return convs_[2].out_channels(); }

 private:
  std::array<Conv2d, 3> convs_;
  std::array<BatchNorm2d, 3> bns_;
};

/// Residual block on the mid-level context, GGC against the upsampled
/// high-level context, then two stride-2 transposed-conv blocks and a 1x1
/// conv + sigmoid boundary head.
class BoundaryStream {
 public:
  struct Result {
    FeatureMap features;  // GGC output, kept for fusion
    Var prob;             // (N, 1, H, W)
  };

  BoundaryStream(ParameterSet& params, const std::string& prefix, int depth, int width_divisor,
                 double momentum, std::mt19937_64& rng);
  Result operator()(const FeatureMap& ctx_mid, const FeatureMap& ctx_high, int out_h, int out_w,
                    bool training);

  ResidualBlock residual;
  GlobalGatedConv ggc;

 private:
  std::array<ConvTranspose2d, 2> up_;
  std::array<BatchNorm2d, 2> up_bn_;
  Conv2d head_;
};

/// BN + 3x3 conv over spatial || context, concatenation with projected
/// boundary information, squeeze-excitation style reweighting with a
/// residual add, and a 1x1 classifier. Logits are at the spatial stride.
class FeatureFusion {
 public:
  FeatureFusion(ParameterSet& params, const std::string& prefix, int spatial_channels, int context_channels,
                std::optional<int> boundary_channels, int num_classes, int width_divisor, double momentum,
                std::mt19937_64& rng);

  /// boundary may be undefined when the boundary stream is disabled.
  Var operator()(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary, bool training);
  /// x * sigmoid(expand(relu(reduce(gap(x))))) + x
  Var reweight(const Var& x) const;
  /// Fused map before reweighting.
  Var encode(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary, bool training);

  Conv2d se_reduce;
  Conv2d se_expand;
  Conv2d classifier;

 private:
  BatchNorm2d input_bn_;
  Conv2d encode_;
  std::optional<Conv2d> boundary_proj_;
  std::optional<Conv2d> block_conv_;
  std::optional<BatchNorm2d> block_bn_;
};

class TBNet {
 public:
  TBNet(const NetworkOptions& options, std::uint64_t seed);

  TBNet(const TBNet&) = delete;
  TBNet& operator=(const TBNet&) = delete;

  FeatureMap spatial_stream(const Var& image, bool training);
  /// Backbone mid/high maps after BN + ReLU and the 1x1 projections.
  std::pair<FeatureMap, FeatureMap> backbone_features(const Var& image, bool training);
  /// Backbone features enhanced by the two attention modules (identity when
  /// attention is ablated).
  std::pair<FeatureMap, FeatureMap> context_stream(const Var& image, bool training);
  BoundaryStream::Result boundary_stream(const FeatureMap& ctx_mid, const FeatureMap& ctx_high, int out_h,
                                         int out_w, bool training);
  ForwardResult fuse(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary, int out_h,
                     int out_w, bool training);

  /// images: (N, 1, H, W), H and W divisible by 32.
  ForwardResult forward(const Var& images, bool training);
  /// Evaluation-mode forward without graph recording.
  NetworkOutput infer(const Tensor& images);

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  const NetworkOptions& options() const { return options_; }

  /// Copies externally supplied backbone weights, named relative to the
  /// backbone ("stem/conv/weight", "stage1/unit0/conv1/weight", ...).
  /// Returns the number of tensors loaded.
  std::size_t load_backbone_weights(const std::map<std::string, Tensor>& weights);

  ContextAwareAttention* caa_mid() { return caa_mid_ ? &*caa_mid_ : nullptr; }
  ContextAwareAttention* caa_high() { return caa_high_ ? &*caa_high_ : nullptr; }
  BoundaryStream* boundary() { return boundary_ ? &*boundary_ : nullptr; }
  FeatureFusion& fusion() { return *fusion_; }

 private:
  NetworkOptions options_;
  ParameterSet params_;
  std::optional<SpatialStream> spatial_;
  std::optional<ResNetV2> backbone_;
  Conv2d project_mid_;
  Conv2d project_high_;
  std::optional<ContextAwareAttention> caa_mid_;
  std::optional<ContextAwareAttention> caa_high_;
  std::optional<BoundaryStream> boundary_;
  std::optional<FeatureFusion> fusion_;
};

/// Stacks gray-scale images (centered at 0.5) into an (N, 1, H, W) tensor.
Tensor input_batch(std::span<const Sample* const> samples);
Tensor input_batch(const Image& image);

}  // namespace tbnet
