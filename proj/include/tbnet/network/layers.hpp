#pragma once

#include <random>
#include <string>

#include "tbnet/network/ops.hpp"
#include "tbnet/network/parameters.hpp"

namespace tbnet {

/// Filter count after dividing by the width divisor (at least 1).
inline int scaled_width(int full, int divisor) { return full / divisor > 0 ? full / divisor : 1; }

class Conv2d {
 public:
  Conv2d() = default;
  /// Weights ~ N(0, 2/fan_in); bias zero.
  Conv2d(ParameterSet& params, const std::string& prefix, int in_channels, int out_channels, int kernel,
         int stride, int pad, bool bias, std::mt19937_64& rng);

  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride_, pad_); }
  int out_channels() const { return weight.shape().n; }

  Var weight;
  Var bias;

 private:
  int stride_ = 1;
  int pad_ = 0;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet& params, const std::string& prefix, int in_channels, int out_channels,
                  int kernel, int stride, int pad, bool bias, std::mt19937_64& rng);

  Var operator()(const Var& x) const { return ops::conv_transpose2d(x, weight, bias, stride_, pad_); }

  Var weight;
  Var bias;

 private:
  int stride_ = 1;
  int pad_ = 0;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet& params, const std::string& prefix, int channels, double momentum);

  Var operator()(const Var& x, bool training) {
    return ops::batch_norm(x, gamma, beta, running_mean.mutable_value(), running_var.mutable_value(),
                           training, momentum_);
  }

  Var gamma;
  Var beta;
  Var running_mean;
  Var running_var;

 private:
  double momentum_ = 0.1;
};

}  // namespace tbnet
