#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tbnet/network/ops.hpp"

namespace tbnet::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
/// gradient is ~0 from turning round-off into a large relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central-difference check of d f / d inputs for every entry of every input.
/// Returns the worst relative error.
inline double max_gradient_error(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> inputs,
                                 double h = 1e-6) {
  for (auto& in : inputs) in.zero_grad();
  f(inputs).backward();
  double worst = 0;
  for (auto& in : inputs) {
    const Tensor analytic = in.grad();
    for (std::size_t i = 0; i < in.value().numel(); ++i) {
      const double orig = in.value()[i];
      double plus, minus;
      {
        NoGradGuard g;
        in.mutable_value()[i] = orig + h;
        plus = f(inputs).value().item();
        in.mutable_value()[i] = orig - h;
        minus = f(inputs).value().item();
        in.mutable_value()[i] = orig;
      }
      worst = std::max(worst, relative_error(analytic[i], (plus - minus) / (2 * h)));
    }
  }
  return worst;
}

/// Contracts an arbitrary-shape output with fixed random weights so every
/// output entry contributes to the checked scalar.
inline Var weighted_sum(const Var& x, const Tensor& weights) { return ops::sum(ops::mul(x, Var(weights))); }

}  // namespace tbnet::testing
