#include <doctest.h>

#include <chrono>
#include <cmath>

#include "../support/gradcheck.hpp"
#include "tbnet/core/error.hpp"
#include "tbnet/losses/losses.hpp"
#include "tbnet/network/tbnet.hpp"

using namespace tbnet;
using tbnet::testing::random_tensor;
using tbnet::testing::relative_error;

namespace {

std::mt19937_64& rng() {
  static std::mt19937_64 r(2024);
  return r;
}

NetworkOptions desk_options(AblationFlags flags = {}) {
  return NetworkOptions::from_config(TrainConfig::desk(), flags, 9);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool has_prefix(const ParameterSet& p, const std::string& prefix) {
  for (const auto& e : p.entries())
    if (e.name.rfind(prefix, 0) == 0) return true;
  return false;
}

}  // namespace

TEST_CASE("fresh attention is the identity") {
  ParameterSet params;
  ContextAwareAttention caa(params, "caa", 16, 4096, rng());
  CHECK(caa.gamma.value().item() == 0.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor f = random_tensor({2, 16, 3 + trial % 3, 4}, rng(), -5, 5);
    CHECK(caa(Var(f)).value() == f);
  }
}

TEST_CASE("attention at a single position is hand computable") {
  ParameterSet params;
  ContextAwareAttention caa(params, "caa", 8, 16, rng());
  caa.gamma.mutable_value()[0] = 1.0;
  const Tensor f = random_tensor({1, 8, 1, 1}, rng());
  const Tensor out = caa(Var(f)).value();
  const Tensor& wq = caa.query.weight.value();
  const Tensor& wk = caa.key.weight.value();
  const Tensor& wv = caa.value.weight.value();
  double q = caa.query.bias.value()[0], k = caa.key.bias.value()[0];
  for (int c = 0; c < 8; ++c) q += wq.at(0, c, 0, 0) * f[c], k += wk.at(0, c, 0, 0) * f[c];
  const double a = sigmoid(q * k);
  for (int o = 0; o < 8; ++o) {
    double v = caa.value.bias.value()[o];
    for (int c = 0; c < 8; ++c) v += wv.at(o, c, 0, 0) * f[c];
    CHECK(out[o] == doctest::Approx(a * v + f[o]).epsilon(1e-12));
  }
}

TEST_CASE("attention is equivariant to swapping two positions") {
  ParameterSet params;
  ContextAwareAttention caa(params, "caa", 8, 16, rng());
  caa.gamma.mutable_value()[0] = 0.7;
  const Tensor f = random_tensor({1, 8, 1, 2}, rng());
  Tensor swapped = f;
  for (int c = 0; c < 8; ++c) std::swap(swapped.at(0, c, 0, 0), swapped.at(0, c, 0, 1));
  const Tensor a = caa(Var(f)).value(), b = caa(Var(swapped)).value();
  for (int c = 0; c < 8; ++c) {
    CHECK(a.at(0, c, 0, 0) == doctest::Approx(b.at(0, c, 0, 1)).epsilon(1e-13));
    CHECK(a.at(0, c, 0, 1) == doctest::Approx(b.at(0, c, 0, 0)).epsilon(1e-13));
  }
}

TEST_CASE("attention refuses oversized maps and shallow inputs") {
  ParameterSet params;
  ContextAwareAttention caa(params, "caa", 8, 16, rng());
  CHECK_THROWS_WITH_AS(caa(Var(Tensor({1, 8, 4, 5}, 0.0))), doctest::Contains("attention size"), ShapeError);
  ParameterSet other;
  CHECK_THROWS_AS(ContextAwareAttention(other, "c", 4, 16, rng()), ShapeError);
}

TEST_CASE("gated convolution limits under weight surgery") {
  ParameterSet params;
  GlobalGatedConv ggc(params, "ggc", 6, 5, 12, 0.1, rng());
  const Tensor f1 = random_tensor({2, 6, 4, 4}, rng(), -3, 3);
  const Tensor f2 = random_tensor({2, 5, 4, 4}, rng(), -3, 3);
  ggc.gate_bn.gamma.mutable_value().fill(0.0);
  ggc.gate_bn.beta.mutable_value().fill(-1e3);
  CHECK(ggc(Var(f1), Var(f2), false).value() == f1);
  ggc.gate_bn.beta.mutable_value().fill(1e3);
  Tensor twice = f1;
  for (double& v : twice.values()) v *= 2;
  CHECK(ggc(Var(f1), Var(f2), false).value() == twice);
}

TEST_CASE("gated convolution output lies between f1 and 2 f1") {
  ParameterSet params;
  GlobalGatedConv ggc(params, "ggc", 4, 4, 8, 0.1, rng());
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor f1 = random_tensor({2, 4, 5, 5}, rng(), 0, 4);
    const Tensor f2 = random_tensor({2, 4, 5, 5}, rng(), -4, 4);
    const Tensor out = ggc(Var(f1), Var(f2), true).value();
    for (std::size_t i = 0; i < out.numel(); ++i) {
      CHECK(out[i] >= f1[i]);
      CHECK(out[i] <= 2 * f1[i]);
    }
  }
  CHECK_THROWS_AS(ggc(Var(Tensor({1, 4, 2, 2}, 1.0)), Var(Tensor({1, 4, 3, 2}, 1.0)), false), ShapeError);
}

TEST_CASE("gated convolution at one pixel is hand computable") {
  ParameterSet params;
  GlobalGatedConv ggc(params, "ggc", 1, 1, 1, 0.1, rng());
  auto set = [](Var& v, std::initializer_list<double> values) {
    std::copy(values.begin(), values.end(), v.mutable_value().values().begin());
  };
  Tensor w1({1, 2, 3, 3}, 0.0);
  w1.at(0, 0, 1, 1) = 0.5;
  w1.at(0, 1, 1, 1) = -0.25;
  ggc.conv1.weight.mutable_value() = w1;
  set(ggc.conv1.bias, {0.1});
  Tensor w2({1, 1, 3, 3}, 0.0);
  w2.at(0, 0, 1, 1) = 2.0;
  ggc.conv2.weight.mutable_value() = w2;
  set(ggc.conv2.bias, {-0.3});
  set(ggc.project.weight, {1.5});
  const double f1 = 0.8, f2 = -0.4;
  const double s = std::sqrt(1.0 + 1e-5);
  const double h1 = std::max(0.0, 0.5 * f1 / s - 0.25 * f2 / s + 0.1);
  const double g = sigmoid(1.5 * (2.0 * h1 - 0.3) / s);
  const Tensor out = ggc(Var(Tensor({1, 1, 1, 1}, f1)), Var(Tensor({1, 1, 1, 1}, f2)), false).value();
  CHECK(out[0] == doctest::Approx(f1 * g + f1).epsilon(1e-14));
}

TEST_CASE("residual block adds its input") {
  ParameterSet params;
  ResidualBlock block(params, "res", 3, rng());
  block.conv2.weight.mutable_value().fill(0.0);
  block.conv2.bias.mutable_value().fill(0.0);
  const Tensor x = random_tensor({1, 3, 4, 4}, rng());
  CHECK(block(Var(x)).value() == x);
}

TEST_CASE("stream shapes and strides at desk scale") {
  TBNet net(desk_options(), 1);
  const Var img(random_tensor({2, 1, 128, 128}, rng()));
  const FeatureMap sp = net.spatial_stream(Var(random_tensor({1, 1, 64, 64}, rng())), false);
  CHECK(sp.data.shape() == Shape{1, 32, 8, 8});
  CHECK(sp.stride == 8);
  auto [mid, high] = net.backbone_features(img, false);
  CHECK(mid.stride == 8);
  CHECK(high.stride == 32);
  CHECK(mid.data.shape().h == 16);
  CHECK(high.data.shape().h == 4);
  CHECK(mid.data.shape().c == 64);
  auto [cmid, chigh] = net.context_stream(img, false);
  CHECK(cmid.data.shape() == mid.data.shape());
  CHECK(chigh.data.shape() == high.data.shape());
  CHECK(cmid.data.value() == mid.data.value());  // gamma = 0

  const NetworkOutput out = net.infer(img.value());
  CHECK(out.seg_probs.shape() == Shape{2, 9, 128, 128});
  CHECK(out.seg_logits.shape() == Shape{2, 9, 128, 128});
  CHECK(out.boundary_prob.shape() == Shape{2, 1, 128, 128});
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 128; y += 7)
      for (int x = 0; x < 128; x += 5) {
        double sum = 0;
        for (int c = 0; c < 9; ++c) sum += out.seg_probs.at(n, c, y, x);
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
  double lo = 1, hi = 0;
  for (double v : out.boundary_prob.values()) lo = std::min(lo, v), hi = std::max(hi, v);
  CHECK(lo >= 0.0);
  CHECK(hi <= 1.0);
  CHECK(hi > lo);
}

TEST_CASE("size checks name the required divisibility") {
  TBNet net(desk_options(), 1);
  CHECK_THROWS_WITH_AS(net.spatial_stream(Var(Tensor({1, 1, 36, 36}, 0.0)), false), doctest::Contains("divisible by 8"),
                       ShapeError);
  CHECK_THROWS_WITH_AS(net.forward(Var(Tensor({1, 1, 48, 48}, 0.0)), false), doctest::Contains("divisible by 32"),
                       ShapeError);
  CHECK_THROWS_AS(net.infer(Tensor({1, 3, 64, 64}, 0.0)), ShapeError);
}

TEST_CASE("all-zero image gives finite outputs") {
  TBNet net(desk_options(), 3);
  const NetworkOutput out = net.infer(Tensor({1, 1, 64, 64}, 0.0));
  CHECK(all_finite(out.seg_logits));
  CHECK(all_finite(out.boundary_prob));
}

TEST_CASE("fusion reweighting saturated to one doubles its input") {
  TBNet net(desk_options(), 1);
  FeatureFusion& f = net.fusion();
  f.se_expand.weight.mutable_value().fill(0.0);
  f.se_expand.bias.mutable_value().fill(1e3);
  const int ch = f.se_expand.out_channels();
  const Tensor x = random_tensor({2, ch, 4, 4}, rng(), -2, 2);
  Tensor twice = x;
  for (double& v : twice.values()) v *= 2;
  CHECK(f.reweight(Var(x)).value() == twice);
}

TEST_CASE("construction and inference are deterministic") {
  TBNet a(desk_options(), 9), b(desk_options(), 9), c(desk_options(), 10);
  CHECK(a.parameters().snapshot() == b.parameters().snapshot());
  CHECK_FALSE(a.parameters().snapshot() == c.parameters().snapshot());
  const Tensor img = random_tensor({1, 1, 64, 64}, rng());
  const NetworkOutput o1 = a.infer(img), o2 = a.infer(img), o3 = b.infer(img);
  CHECK(o1.seg_logits == o2.seg_logits);
  CHECK(o1.boundary_prob == o2.boundary_prob);
  CHECK(o1.seg_logits == o3.seg_logits);
}

TEST_CASE("ablations remove their parameters") {
  TBNet full(desk_options(), 0);
  TBNet no_caa(desk_options({false, true, true}), 0);
  TBNet no_bs(desk_options({true, false, true}), 0);
  TBNet none(desk_options({false, false, false}), 0);
  CHECK(has_prefix(full.parameters(), "context/caa_mid/"));
  CHECK(has_prefix(full.parameters(), "boundary/ggc/"));
  CHECK_FALSE(has_prefix(no_caa.parameters(), "context/caa"));
  CHECK_FALSE(has_prefix(no_bs.parameters(), "boundary/"));
  CHECK_FALSE(has_prefix(no_bs.parameters(), "fusion/boundary_proj"));
  CHECK(has_prefix(no_bs.parameters(), "fusion/block/conv"));
  CHECK(none.parameters().parameter_count() < full.parameters().parameter_count());
  CHECK(no_bs.caa_mid() != nullptr);
  CHECK(no_bs.boundary() == nullptr);
  const NetworkOutput out = no_bs.infer(random_tensor({1, 1, 64, 64}, rng()));
  CHECK(out.boundary_prob.empty());
  CHECK(out.seg_probs.shape() == Shape{1, 9, 64, 64});
}

TEST_CASE("map-sourced fusion runs") {
  TrainConfig cfg = TrainConfig::desk();
  cfg.fusion_boundary_source = BoundarySource::Map;
  TBNet net(NetworkOptions::from_config(cfg, {}, 9), 0);
  CHECK(net.infer(random_tensor({1, 1, 64, 64}, rng())).seg_probs.shape() == Shape{1, 9, 64, 64});
}

TEST_CASE("parameter names follow stream/block/layer/tensor") {
  TBNet net(desk_options(), 0);
  const ParameterSet& p = net.parameters();
  for (const char* name : {"spatial/block0/conv/weight", "spatial/block2/bn/running_var",
                           "context/backbone/stem/conv/weight", "context/backbone/stage3/unit22/conv3/weight",
                           "context/caa_high/gamma", "boundary/head/up1/deconv/weight", "fusion/classifier/bias"})
    CHECK_MESSAGE(p.contains(name), name);
  CHECK_FALSE(p.find("spatial/block0/bn/running_mean")->trainable);
}

TEST_CASE("full-width parameter count regression") {
  TBNet net(NetworkOptions::from_config(TrainConfig{}, {}, 9), 0);
  CHECK(net.parameters().parameter_count() == 59889760);
}

TEST_CASE("pretrained backbone weights load by name") {
  TBNet a(desk_options(), 1), b(desk_options(), 2);
  std::map<std::string, Tensor> weights;
  for (const auto& [name, t] : a.parameters().snapshot())
    if (name.rfind("context/backbone/", 0) == 0) weights[name.substr(17)] = t;
  CHECK(b.load_backbone_weights(weights) == weights.size());
  CHECK(b.parameters().find("context/backbone/stem/conv/weight")->var.value() ==
        a.parameters().find("context/backbone/stem/conv/weight")->var.value());
  weights.begin()->second = Tensor({1, 1, 1, 1}, 0.0);
  CHECK_THROWS_AS(b.load_backbone_weights(weights), ShapeError);
}

TEST_CASE("boundary loss gradient w.r.t. a gated-conv weight matches finite differences") {
  TrainConfig cfg = TrainConfig::desk();
  cfg.backbone_blocks = {1, 1, 1, 1};
  TBNet net(NetworkOptions::from_config(cfg, {}, 9), 4);
  net.caa_mid()->gamma.mutable_value()[0] = 0.5;
  net.caa_high()->gamma.mutable_value()[0] = 0.5;
  const Tensor img = random_tensor({2, 1, 32, 32}, rng(), -0.5, 0.5);
  std::vector<std::uint8_t> target(2 * 32 * 32);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = (i * 7919) % 5 == 0;
  Var w = net.boundary()->ggc.conv1.weight;
  auto loss = [&] { return boundary_bce(net.forward(Var(img), true).boundary_prob, target); };
  net.parameters().zero_grad();
  loss().backward();
  const Tensor analytic = w.grad();
  std::uniform_int_distribution<std::size_t> pick(0, w.value().numel() - 1);
  const double h = 1e-5;
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = pick(rng());
    const double orig = w.value()[i];
    NoGradGuard guard;
    w.mutable_value()[i] = orig + h;
    const double plus = loss().value().item();
    w.mutable_value()[i] = orig - h;
    const double minus = loss().value().item();
    w.mutable_value()[i] = orig;
    CHECK(relative_error(analytic[i], (plus - minus) / (2 * h), 1e-6) < 1e-3);
  }
}

TEST_CASE("desk forward and backward stay fast") {
  TBNet net(desk_options(), 0);
  const Tensor img = random_tensor({2, 1, 128, 128}, rng());
  const auto start = std::chrono::steady_clock::now();
  const ForwardResult r = net.forward(Var(img), true);
  ops::sum(r.seg_probs).backward();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(seconds < 5.0);
}
