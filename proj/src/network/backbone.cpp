#include "tbnet/network/backbone.hpp"

namespace tbnet {

PreActBottleneck::PreActBottleneck(ParameterSet& params, const std::string& prefix, int in_channels, int width,
                                   int stride, double momentum, std::mt19937_64& rng)
    : pre_bn_(params, prefix + "/preact_bn", in_channels, momentum),
      conv1_(params, prefix + "/conv1", in_channels, width, 1, 1, 0, false, rng),
      bn2_(params, prefix + "/bn2", width, momentum),
      conv2_(params, prefix + "/conv2", width, width, 3, stride, 1, false, rng),
      bn3_(params, prefix + "/bn3", width, momentum),
      conv3_(params, prefix + "/conv3", width, width * 4, 1, 1, 0, false, rng) {
  if (stride != 1 || in_channels != width * 4)
    shortcut_.emplace(params, prefix + "/shortcut", in_channels, width * 4, 1, stride, 0, false, rng);
}

Var PreActBottleneck::operator()(const Var& x, bool training) {
  const Var preact = ops::relu(pre_bn_(x, training));
  const Var shortcut = shortcut_ ? (*shortcut_)(preact) : x;
  Var r = conv1_(preact);
  r = conv2_(ops::relu(bn2_(r, training)));
  r = conv3_(ops::relu(bn3_(r, training)));
  return ops::add(shortcut, r);
}

ResNetV2::ResNetV2(ParameterSet& params, const std::string& prefix, std::array<int, 4> blocks,
                   int width_divisor, double momentum, std::mt19937_64& rng) {
  const int stem = scaled_width(64, width_divisor);
  stem_ = Conv2d(params, prefix + "/stem/conv", 1, stem, 7, 2, 3, true, rng);
  const std::array<int, 4> widths{64, 128, 256, 512};
  int in = stem;
  for (std::size_t s = 0; s < 4; ++s) {
    const int width = scaled_width(widths[s], width_divisor);
    std::vector<PreActBottleneck> units;
    for (int u = 0; u < blocks[s]; ++u) {
      const int stride = (u == 0 && s > 0) ? 2 : 1;
      units.emplace_back(params, prefix + "/stage" + std::to_string(s + 1) + "/unit" + std::to_string(u), in,
                         width, stride, momentum, rng);
      in = units.back().out_channels();
    }
    if (s == 1) mid_channels_ = in;
    stages_.push_back(std::move(units));
  }
  high_channels_ = in;
  post_mid_ = BatchNorm2d(params, prefix + "/post_mid_bn", mid_channels_, momentum);
  post_high_ = BatchNorm2d(params, prefix + "/post_high_bn", high_channels_, momentum);
}

ResNetV2::Features ResNetV2::operator()(const Var& image, bool training) {
  Var x = ops::max_pool(stem_(image), 3, 2, 1);
  Features f;
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (auto& unit : stages_[s]) x = unit(x, training);
    // Pre-activation units leave their outputs un-normalized.
    if (s == 1) f.mid = ops::relu(post_mid_(x, training));
  }
  f.high = ops::relu(post_high_(x, training));
  return f;
}

}  // namespace tbnet
