#include "tbnet/training/optimizer.hpp"

#include <cmath>

#include "tbnet/core/error.hpp"

namespace tbnet {

RMSProp::RMSProp(std::vector<Var> params, double learning_rate, double decay, double eps)
    : params_(std::move(params)), lr_(learning_rate), decay_(decay), eps_(eps) {
  if (!(learning_rate > 0)) throw ConfigError("learning rate must be > 0");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("decay must be in (0,1]");
  if (!(eps > 0)) throw ConfigError("optimizer epsilon must be > 0");
  accum_.reserve(params_.size());
  for (const auto& p : params_) accum_.emplace_back(p.shape(), 0.0);
}

void RMSProp::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Var& p = params_[k];
    if (!p.has_grad()) continue;
    const Tensor& g = p.node()->grad;
    Tensor& v = accum_[k];
    Tensor& theta = p.mutable_value();
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      v[i] = decay_ * v[i] + (1.0 - decay_) * g[i] * g[i];
      theta[i] -= lr_ * g[i] / std::sqrt(v[i] + eps_);
    }
  }
}

void RMSProp::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void RMSProp::set_accumulators(std::vector<Tensor> accum) {
  if (accum.size() != params_.size())
    throw ShapeError("optimizer state has " + std::to_string(accum.size()) + " accumulators, expected " +
                     std::to_string(params_.size()));
  for (std::size_t k = 0; k < accum.size(); ++k)
    if (accum[k].shape() != params_[k].shape())
      throw ShapeError("optimizer accumulator " + std::to_string(k) + " has shape " + accum[k].shape().str() +
                       ", parameter " + params_[k].shape().str());
  accum_ = std::move(accum);
}

}  // namespace tbnet
