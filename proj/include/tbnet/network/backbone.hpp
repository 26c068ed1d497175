#pragma once

#include <array>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tbnet/network/layers.hpp"

namespace tbnet {

/// Pre-activation bottleneck unit: BN-ReLU-conv1x1, BN-ReLU-conv3x3(stride),
/// BN-ReLU-conv1x1 (4x expansion), plus identity or projected shortcut.
class PreActBottleneck {
 public:
  PreActBottleneck(ParameterSet& params, const std::string& prefix, int in_channels, int width, int stride,
                   double momentum, std::mt19937_64& rng);

  Var operator()(const Var& x, bool training);
  int out_channels() const { return conv3_.out_channels(); }

 private:
  BatchNorm2d pre_bn_;
  Conv2d conv1_;
  BatchNorm2d bn2_;
  Conv2d conv2_;
  BatchNorm2d bn3_;
  Conv2d conv3_;
  std::optional<Conv2d> shortcut_;
};

/// ResNet v2 (pre-activation) with four bottleneck stages. The 101-layer
/// topology is blocks {3, 4, 23, 3}; widths are divided by `width_divisor`.
class ResNetV2 {
 public:
  struct Features {
    Var mid;   // stage-2 output after BN + ReLU, stride 8
    Var high;  // stage-4 output after BN + ReLU, stride 32
  };

  ResNetV2(ParameterSet& params, const std::string& prefix, std::array<int, 4> blocks, int width_divisor,
           double momentum, std::mt19937_64& rng);

  Features operator()(const Var& image, bool training);
  int mid_channels() const { return mid_channels_; }
  int high_channels() const { return high_channels_; }

 private:
  Conv2d stem_;
  std::vector<std::vector<PreActBottleneck>> stages_;
  BatchNorm2d post_mid_;
  BatchNorm2d post_high_;
  int mid_channels_ = 0;
  int high_channels_ = 0;
};

}  // namespace tbnet
