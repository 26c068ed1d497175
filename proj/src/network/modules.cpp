#include "tbnet/network/modules.hpp"

#include "tbnet/core/error.hpp"

namespace tbnet {

ContextAwareAttention::ContextAwareAttention(ParameterSet& params, const std::string& prefix, int depth,
                                             int max_positions, std::mt19937_64& rng)
    : depth_(depth), max_positions_(max_positions) {
  if (depth < kReduction)
    throw ShapeError("attention depth " + std::to_string(depth) + " is smaller than the reduction factor " +
                     std::to_string(kReduction));
  const int reduced = depth / kReduction;
  query = Conv2d(params, prefix + "/query", depth, reduced, 1, 1, 0, true, rng);
  key = Conv2d(params, prefix + "/key", depth, reduced, 1, 1, 0, true, rng);
  value = Conv2d(params, prefix + "/value", depth, depth, 1, 1, 0, true, rng);
  gamma = params.add_parameter(prefix + "/gamma", Tensor::scalar(0.0));
}

Var ContextAwareAttention::operator()(const Var& f) const {
  const Shape s = f.shape();
  if (s.c != depth_) throw ShapeError("attention expects depth " + std::to_string(depth_) + ", got " + s.str());
  if (s.plane() > static_cast<std::size_t>(max_positions_))
    throw ShapeError("attention size " + std::to_string(s.plane()) + " positions exceeds the cap of " +
                     std::to_string(max_positions_));
  const Var context = ops::position_attention(query(f), key(f), value(f));
  return ops::add(ops::scale(context, gamma), f);
}

GlobalGatedConv::GlobalGatedConv(ParameterSet& params, const std::string& prefix, int f1_depth, int f2_depth,
                                 int width, double momentum, std::mt19937_64& rng)
    : input_bn(params, prefix + "/input_bn", f1_depth + f2_depth, momentum),
      conv1(params, prefix + "/conv1", f1_depth + f2_depth, width, 3, 1, 1, true, rng),
      conv2(params, prefix + "/conv2", width, width, 3, 1, 1, true, rng),
      project(params, prefix + "/project", width, f1_depth, 1, 1, 0, false, rng),
      gate_bn(params, prefix + "/gate_bn", f1_depth, momentum) {}

Var GlobalGatedConv::gate(const Var& f1, const Var& f2, bool training) {
  if (f1.shape().n != f2.shape().n || f1.shape().h != f2.shape().h || f1.shape().w != f2.shape().w)
    throw ShapeError("gated conv inputs differ spatially: " + f1.shape().str() + " vs " + f2.shape().str());
  Var x = input_bn(ops::concat_channels({f1, f2}), training);
  x = conv2(ops::relu(conv1(x)));
  return ops::sigmoid(gate_bn(project(x), training));
}

Var GlobalGatedConv::operator()(const Var& f1, const Var& f2, bool training) {
  return ops::add(ops::mul(f1, gate(f1, f2, training)), f1);
}

ResidualBlock::ResidualBlock(ParameterSet& params, const std::string& prefix, int channels, std::mt19937_64& rng)
    : conv1(params, prefix + "/conv1", channels, channels, 3, 1, 1, true, rng),
      conv2(params, prefix + "/conv2", channels, channels, 3, 1, 1, true, rng) {}

Var ResidualBlock::operator()(const Var& x) const { return ops::add(conv2(ops::relu(conv1(x))), x); }

}  // namespace tbnet
