#pragma once

#include <random>
#include <string>

#include "tbnet/network/layers.hpp"

namespace tbnet {

/// Context-aware attention:
///   out = gamma * (V x sigmoid(Q^T K)^T) + f
/// with Q, K = 1x1 projections to depth/8 and V = 1x1 projection keeping the
/// depth. gamma starts at exactly 0, so a fresh module is the identity.
class ContextAwareAttention {
 public:
  static constexpr int kReduction = 8;

  ContextAwareAttention(ParameterSet& params, const std::string& prefix, int depth, int max_positions,
                        std::mt19937_64& rng);

  /// Throws ShapeError when H*W exceeds the configured attention size.
  Var operator()(const Var& f) const;

  Conv2d query;
  Conv2d key;
  Conv2d value;
  Var gamma;

 private:
  int depth_;
  int max_positions_;
};

/// Global-gated convolution: gate = sigmoid(BN(P(conv3x3(ReLU(conv3x3(BN(f1 || f2)))))))
/// where P is a 1x1 projection to f1's depth; out = f1 * gate + f1.
class GlobalGatedConv {
 public:
  GlobalGatedConv(ParameterSet& params, const std::string& prefix, int f1_depth, int f2_depth, int width,
                  double momentum, std::mt19937_64& rng);

  Var operator()(const Var& f1, const Var& f2, bool training);
  /// The sigmoid gate alone (same shape as f1).
  Var gate(const Var& f1, const Var& f2, bool training);

  BatchNorm2d input_bn;
  Conv2d conv1;
  Conv2d conv2;
  Conv2d project;
  BatchNorm2d gate_bn;
};

/// conv3x3 -> ReLU -> conv3x3 with a short skip connection.
class ResidualBlock {
 public:
  ResidualBlock(ParameterSet& params, const std::string& prefix, int channels, std::mt19937_64& rng);
  Var operator()(const Var& x) const;

  Conv2d conv1;
  Conv2d conv2;
};

}  // namespace tbnet
