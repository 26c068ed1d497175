#include "tbnet/network/tbnet.hpp"

#include "tbnet/core/error.hpp"
#include "tbnet/core/rng.hpp"

namespace tbnet {

NetworkOptions NetworkOptions::from_config(const TrainConfig& cfg, const AblationFlags& flags, int num_classes) {
  NetworkOptions o;
  o.num_classes = num_classes;
  o.width_divisor = cfg.width_divisor;
  o.backbone_blocks = cfg.backbone_blocks;
  o.context_depth = cfg.context_depth;
  o.caa_max_positions = cfg.caa_max_positions;
  o.fusion_boundary_source = cfg.fusion_boundary_source;
  o.bn_momentum = cfg.bn_momentum;
  o.flags = flags;
  return o;
}

SpatialStream::SpatialStream(ParameterSet& params, const std::string& prefix, int width_divisor,
                             double momentum, std::mt19937_64& rng) {
  const std::array<int, 3> widths{64, 128, 256};
  int in = 1;
  for (std::size_t i = 0; i < 3; ++i) {
    const int out = scaled_width(widths[i], width_divisor);
    const std::string block = prefix + "/block" + std::to_string(i);
    convs_[i] = Conv2d(params, block + "/conv", in, out, 3, 2, 1, false, rng);
    bns_[i] = BatchNorm2d(params, block + "/bn", out, momentum);
    in = out;
  }
}

FeatureMap SpatialStream::operator()(const Var& image, bool training) {
  const Shape s = image.shape();
  if (s.h % 8 != 0 || s.w % 8 != 0)
    throw ShapeError("spatial stream needs height and width divisible by 8, got " + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
  Var x = image;
  for (std::size_t i = 0; i < 3; ++i) x = ops::relu(bns_[i](convs_[i](x), training));
  return {x, 8};
}

BoundaryStream::BoundaryStream(ParameterSet& params, const std::string& prefix, int depth, int width_divisor,
                               double momentum, std::mt19937_64& rng)
    : residual(params, prefix + "/residual", depth, rng),
      ggc(params, prefix + "/ggc", depth, depth, scaled_width(512, width_divisor), momentum, rng) {
  const std::array<int, 2> widths{scaled_width(128, width_divisor), scaled_width(64, width_divisor)};
  int in = depth;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string block = prefix + "/head/up" + std::to_string(i);
    up_[i] = ConvTranspose2d(params, block + "/deconv", in, widths[i], 4, 2, 1, false, rng);
    up_bn_[i] = BatchNorm2d(params, block + "/bn", widths[i], momentum);
    in = widths[i];
  }
  head_ = Conv2d(params, prefix + "/head/out", in, 1, 1, 1, 0, true, rng);
}

BoundaryStream::Result BoundaryStream::operator()(const FeatureMap& ctx_mid, const FeatureMap& ctx_high,
                                                  int out_h, int out_w, bool training) {
  const Shape mid = ctx_mid.data.shape();
  const Var high = ops::resize_bilinear(ctx_high.data, mid.h, mid.w);
  const Var features = ggc(residual(ctx_mid.data), high, training);
  Var x = features;
  for (std::size_t i = 0; i < 2; ++i) x = ops::relu(up_bn_[i](up_[i](x), training));
  const Var prob = ops::resize_bilinear(ops::sigmoid(head_(x)), out_h, out_w);
  return {{features, ctx_mid.stride}, prob};
}

FeatureFusion::FeatureFusion(ParameterSet& params, const std::string& prefix, int spatial_channels,
                             int context_channels, std::optional<int> boundary_channels, int num_classes,
                             int width_divisor, double momentum, std::mt19937_64& rng)
    : input_bn_(params, prefix + "/input_bn", spatial_channels + context_channels, momentum) {
  const int encoded = scaled_width(256, width_divisor);
  encode_ = Conv2d(params, prefix + "/encode", spatial_channels + context_channels, encoded, 3, 1, 1, true, rng);
  int fused = encoded;
  if (boundary_channels) {
    const int proj = scaled_width(64, width_divisor);
    boundary_proj_.emplace(params, prefix + "/boundary_proj", *boundary_channels, proj, 1, 1, 0, true, rng);
    fused += proj;
  } else {
    block_conv_.emplace(params, prefix + "/block/conv", encoded, encoded, 3, 1, 1, false, rng);
    block_bn_.emplace(params, prefix + "/block/bn", encoded, momentum);
  }
  const int squeezed = scaled_width(fused, 16);
  se_reduce = Conv2d(params, prefix + "/reweight/reduce", fused, squeezed, 1, 1, 0, true, rng);
  se_expand = Conv2d(params, prefix + "/reweight/expand", squeezed, fused, 1, 1, 0, true, rng);
  classifier = Conv2d(params, prefix + "/classifier", fused, num_classes, 1, 1, 0, true, rng);
}

Var FeatureFusion::encode(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary,
                          bool training) {
  const Shape s = spatial.data.shape();
  const Var ctx = ops::resize_bilinear(context.data, s.h, s.w);
  Var x = encode_(input_bn_(ops::concat_channels({spatial.data, ctx}), training));
  if (boundary_proj_) {
    if (!boundary.defined()) throw ShapeError("fusion expects boundary information");
    const Var b = (*boundary_proj_)(ops::resize_bilinear(boundary, s.h, s.w));
    x = ops::concat_channels({x, b});
  } else {
    x = ops::relu((*block_bn_)((*block_conv_)(x), training));
  }
  return x;
}

Var FeatureFusion::reweight(const Var& x) const {
  const Var w = ops::sigmoid(se_expand(ops::relu(se_reduce(ops::global_avg_pool(x)))));
  return ops::add(ops::scale_channels(x, w), x);
}

Var FeatureFusion::operator()(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary,
                              bool training) {
  return classifier(reweight(encode(spatial, context, boundary, training)));
}

TBNet::TBNet(const NetworkOptions& options, std::uint64_t seed) : options_(options) {
  auto rng = substream(seed, "init");
  const int div = options.width_divisor;
  const double m = options.bn_momentum;
  spatial_.emplace(params_, "spatial", div, m, rng);
  backbone_.emplace(params_, "context/backbone", options.backbone_blocks, div, m, rng);
  const int depth = scaled_width(options.context_depth, div);
  project_mid_ = Conv2d(params_, "context/project_mid", backbone_->mid_channels(), depth, 1, 1, 0, true, rng);
  project_high_ = Conv2d(params_, "context/project_high", backbone_->high_channels(), depth, 1, 1, 0, true, rng);
  if (options.flags.use_caa) {
    caa_mid_.emplace(params_, "context/caa_mid", depth, options.caa_max_positions, rng);
    caa_high_.emplace(params_, "context/caa_high", depth, options.caa_max_positions, rng);
  }
  std::optional<int> boundary_channels;
  if (options.flags.use_boundary_stream) {
    boundary_.emplace(params_, "boundary", depth, div, m, rng);
    boundary_channels = options.fusion_boundary_source == BoundarySource::Features ? depth : 1;
  }
  fusion_.emplace(params_, "fusion", spatial_->out_channels(), depth, boundary_channels, options.num_classes, div,
                  m, rng);
}

FeatureMap TBNet::spatial_stream(const Var& image, bool training) { return (*spatial_)(image, training); }

std::pair<FeatureMap, FeatureMap> TBNet::backbone_features(const Var& image, bool training) {
  const Shape s = image.shape();
  if (s.h % 32 != 0 || s.w % 32 != 0)
    throw ShapeError("context stream needs height and width divisible by 32, got " + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
  const auto f = (*backbone_)(image, training);
  return {{project_mid_(f.mid), 8}, {project_high_(f.high), 32}};
}

std::pair<FeatureMap, FeatureMap> TBNet::context_stream(const Var& image, bool training) {
  auto [mid, high] = backbone_features(image, training);
  if (caa_mid_) {
    mid.data = (*caa_mid_)(mid.data);
    high.data = (*caa_high_)(high.data);
  }
  return {mid, high};
}

BoundaryStream::Result TBNet::boundary_stream(const FeatureMap& ctx_mid, const FeatureMap& ctx_high, int out_h,
                                              int out_w, bool training) {
  if (!boundary_) throw Error("boundary stream is disabled in this network");
  return (*boundary_)(ctx_mid, ctx_high, out_h, out_w, training);
}

ForwardResult TBNet::fuse(const FeatureMap& spatial, const FeatureMap& context, const Var& boundary, int out_h,
                          int out_w, bool training) {
  ForwardResult r;
  r.seg_logits = ops::resize_bilinear((*fusion_)(spatial, context, boundary, training), out_h, out_w);
  r.seg_probs = ops::softmax_channels(r.seg_logits);
  return r;
}

ForwardResult TBNet::forward(const Var& images, bool training) {
  const Shape s = images.shape();
  if (s.c != 1) throw ShapeError("network expects single-channel images, got " + s.str());
  const FeatureMap spatial = spatial_stream(images, training);
  const auto [ctx_mid, ctx_high] = context_stream(images, training);
  Var boundary_in;
  Var boundary_prob;
  if (boundary_) {
    auto b = boundary_stream(ctx_mid, ctx_high, s.h, s.w, training);
    boundary_prob = b.prob;
    boundary_in = options_.fusion_boundary_source == BoundarySource::Features ? b.features.data : b.prob;
  }
  ForwardResult r = fuse(spatial, ctx_mid, boundary_in, s.h, s.w, training);
  r.boundary_prob = boundary_prob;
  return r;
}

NetworkOutput TBNet::infer(const Tensor& images) {
  NoGradGuard guard;
  const ForwardResult r = forward(Var(images), false);
  NetworkOutput out;
  out.seg_logits = r.seg_logits.value();
  out.seg_probs = r.seg_probs.value();
  if (r.boundary_prob.defined()) out.boundary_prob = r.boundary_prob.value();
  return out;
}

std::size_t TBNet::load_backbone_weights(const std::map<std::string, Tensor>& weights) {
  const std::string prefix = "context/backbone/";
  std::map<std::string, Tensor> named;
  for (const auto& [name, t] : weights) named.emplace(prefix + name, t);
  return params_.load(named, prefix);
}

Tensor input_batch(std::span<const Sample* const> samples) {
  if (samples.empty()) throw ShapeError("empty batch");
  const int h = samples.front()->image.height;
  const int w = samples.front()->image.width;
  Tensor t({static_cast<int>(samples.size()), 1, h, w});
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Image& img = samples[n]->image;
    if (!img.same_shape(h, w)) throw ShapeError("batch images differ in size");
    for (std::size_t i = 0; i < img.size(); ++i) t[n * img.size() + i] = img.values[i] - 0.5;
  }
  return t;
}

Tensor input_batch(const Image& image) {
  Tensor t({1, 1, image.height, image.width});
  for (std::size_t i = 0; i < image.size(); ++i) t[i] = image.values[i] - 0.5;
  return t;
}

}  // namespace tbnet
