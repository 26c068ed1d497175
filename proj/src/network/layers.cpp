#include "tbnet/network/layers.hpp"

#include <cmath>

namespace tbnet {

namespace {

Tensor he_normal(Shape shape, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  Tensor t(shape);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

Conv2d::Conv2d(ParameterSet& params, const std::string& prefix, int in_channels, int out_channels, int kernel,
               int stride, int pad, bool with_bias, std::mt19937_64& rng)
    : stride_(stride), pad_(pad) {
  weight = params.add_parameter(prefix + "/weight", he_normal({out_channels, in_channels, kernel, kernel},
                                                              in_channels * kernel * kernel, rng));
  if (with_bias) bias = params.add_parameter(prefix + "/bias", Tensor({1, out_channels, 1, 1}, 0.0));
}

ConvTranspose2d::ConvTranspose2d(ParameterSet& params, const std::string& prefix, int in_channels,
                                 int out_channels, int kernel, int stride, int pad, bool with_bias,
                                 std::mt19937_64& rng)
    : stride_(stride), pad_(pad) {
  weight = params.add_parameter(prefix + "/weight", he_normal({in_channels, out_channels, kernel, kernel},
                                                              in_channels * kernel * kernel, rng));
  if (with_bias) bias = params.add_parameter(prefix + "/bias", Tensor({1, out_channels, 1, 1}, 0.0));
}

BatchNorm2d::BatchNorm2d(ParameterSet& params, const std::string& prefix, int channels, double momentum)
    : momentum_(momentum) {
  const Shape s{1, channels, 1, 1};
  gamma = params.add_parameter(prefix + "/gamma", Tensor(s, 1.0));
  beta = params.add_parameter(prefix + "/beta", Tensor(s, 0.0));
  running_mean = params.add_buffer(prefix + "/running_mean", Tensor(s, 0.0));
  running_var = params.add_buffer(prefix + "/running_var", Tensor(s, 1.0));
}

}  // namespace tbnet
