#pragma once

#include <vector>

#include "tbnet/network/autograd.hpp"

namespace tbnet {

/// RMSProp without momentum:
///   v     <- decay * v + (1 - decay) * g^2
///   theta <- theta - lr * g / sqrt(v + eps)
/// Parameters without a gradient are skipped.
class RMSProp {
 public:
  RMSProp(std::vector<Var> params, double learning_rate, double decay, double eps);

  void step();
  void zero_grad();

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double decay() const { return decay_; }
  double eps() const { return eps_; }

  const std::vector<Var>& params() const { return params_; }
  /// Squared-gradient running averages, one per parameter, same shapes.
  const std::vector<Tensor>& accumulators() const { return accum_; }
  /// Throws ShapeError when count or shapes differ.
  void set_accumulators(std::vector<Tensor> accum);

 private:
  std::vector<Var> params_;
  std::vector<Tensor> accum_;
  double lr_;
  double decay_;
  double eps_;
};

}  // namespace tbnet
