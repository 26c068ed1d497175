#include "tbnet/losses/losses.hpp"

#include <cmath>
#include <vector>

#include "tbnet/core/error.hpp"

namespace tbnet {

namespace {

// Per-pixel coefficients so every mode becomes sum_m coef[m] * -log p[m, c(m)].
std::vector<double> ce_coefficients(const Shape& s, std::span<const std::uint8_t> labels,
                                    const ClassWeights& weights, WeightingMode mode, Reduction reduction) {
  const std::size_t plane = s.plane();
  const std::size_t pixels = static_cast<std::size_t>(s.n) * plane;
  if (labels.size() != pixels)
    throw ShapeError("labels hold " + std::to_string(labels.size()) + " pixels, probabilities " + s.str());
  if (mode != WeightingMode::None && weights.num_classes() != s.c)
    throw ShapeError("class weights for " + std::to_string(weights.num_classes()) + " classes, probabilities " + s.str());
  for (auto l : labels)
    if (l >= s.c) throw ValidationError("label " + std::to_string(l) + " outside " + std::to_string(s.c) + " classes");

  std::vector<double> coef(pixels, 1.0);
  const double total = static_cast<double>(pixels);
  switch (mode) {
    case WeightingMode::None:
      if (reduction == Reduction::Mean)
        for (double& c : coef) c = 1.0 / total;
      break;
    case WeightingMode::PerPixel:
      for (std::size_t m = 0; m < pixels; ++m)
        coef[m] = weights.normalized[labels[m]] / (reduction == Reduction::Mean ? total : 1.0);
      break;
    case WeightingMode::PerImage: {
      const double norm = reduction == Reduction::Mean ? s.n * static_cast<double>(plane) * static_cast<double>(plane) : 1.0;
      for (int n = 0; n < s.n; ++n) {
        double omega = 0;
        for (std::size_t m = 0; m < plane; ++m) omega += weights.normalized[labels[n * plane + m]];
        for (std::size_t m = 0; m < plane; ++m) coef[n * plane + m] = omega / norm;
      }
      break;
    }
  }
  return coef;
}

std::size_t prob_index(const Shape& s, std::size_t pixel, int c) {
  const std::size_t plane = s.plane();
  const std::size_t n = pixel / plane, m = pixel % plane;
  return (n * static_cast<std::size_t>(s.c) + static_cast<std::size_t>(c)) * plane + m;
}

}  // namespace

Var weighted_ce(const Var& probs, std::span<const std::uint8_t> labels, const ClassWeights& weights,
                WeightingMode mode, Reduction reduction) {
  const Shape s = probs.shape();
  if (!all_finite(probs.value())) throw NumericError("segmentation probabilities contain NaN/inf");
  auto coef = ce_coefficients(s, labels, weights, mode, reduction);
  double loss = 0;
  for (std::size_t m = 0; m < coef.size(); ++m) {
    const double p = probs.value()[prob_index(s, m, labels[m])];
    loss -= coef[m] * std::log(std::max(p, kLogEpsilon));
  }
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  return Var::from_op(Tensor::scalar(loss), {probs},
                      [s, coef = std::move(coef), lab = std::move(lab)](detail::Node& node) {
    detail::Node& pn = *node.inputs[0];
    Tensor d(s, 0.0);
    const double g = node.grad[0];
    for (std::size_t m = 0; m < coef.size(); ++m) {
      const std::size_t i = prob_index(s, m, lab[m]);
      const double p = pn.value[i];
      if (p > kLogEpsilon) d[i] = -g * coef[m] / p;
    }
    pn.accumulate(d);
  });
}

double weighted_ce(const Tensor& probs, std::span<const std::uint8_t> labels, const ClassWeights& weights,
                   WeightingMode mode, Reduction reduction) {
  NoGradGuard guard;
  return weighted_ce(Var(probs), labels, weights, mode, reduction).value().item();
}

Var boundary_bce(const Var& pred, std::span<const std::uint8_t> target, Reduction reduction) {
  const Tensor& p = pred.value();
  if (target.size() != p.numel())
    throw ShapeError("boundary target holds " + std::to_string(target.size()) + " pixels, prediction " +
                     p.shape().str());
  for (auto t : target)
    if (t > 1) throw ValidationError("boundary target is not binary");
  if (!all_finite(p)) throw NumericError("boundary probabilities contain NaN/inf");
  const double coef = reduction == Reduction::Mean ? 1.0 / static_cast<double>(p.numel()) : 1.0;
  double loss = 0;
  for (std::size_t i = 0; i < p.numel(); ++i)
    loss -= coef * (target[i] ? std::log(std::max(p[i], kLogEpsilon)) : std::log(std::max(1.0 - p[i], kLogEpsilon)));
  std::vector<std::uint8_t> y(target.begin(), target.end());
  return Var::from_op(Tensor::scalar(loss), {pred}, [coef, y = std::move(y)](detail::Node& node) {
    detail::Node& pn = *node.inputs[0];
    Tensor d(pn.value.shape(), 0.0);
    const double g = node.grad[0];
    for (std::size_t i = 0; i < d.numel(); ++i) {
      const double v = pn.value[i];
      if (y[i]) {
        if (v > kLogEpsilon) d[i] = -g * coef / v;
      } else if (1.0 - v > kLogEpsilon) {
        d[i] = g * coef / (1.0 - v);
      }
    }
    pn.accumulate(d);
  });
}

double boundary_bce(const Tensor& pred, std::span<const std::uint8_t> target, Reduction reduction) {
  NoGradGuard guard;
  return boundary_bce(Var(pred), target, reduction).value().item();
}

LossReport DualTaskLoss::report() const {
  LossReport r;
  r.total = total.value().item();
  r.seg = seg.value().item();
  r.boundary = boundary.defined() ? boundary.value().item() : 0.0;
  return r;
}

DualTaskLoss dual_task_loss(const ForwardResult& out, std::span<const std::uint8_t> labels,
                            std::span<const std::uint8_t> boundary_targets, const ClassWeights& weights,
                            WeightingMode mode, const TrainConfig& cfg) {
  DualTaskLoss loss;
  loss.seg = weighted_ce(out.seg_probs, labels, weights, mode, cfg.loss_reduction);
  loss.total = ops::scale(loss.seg, cfg.lambda_seg);
  if (out.boundary_prob.defined()) {
    loss.boundary = boundary_bce(out.boundary_prob, boundary_targets, cfg.loss_reduction);
    loss.total = ops::add(loss.total, ops::scale(loss.boundary, cfg.lambda_boundary));
  }
  return loss;
}

LossReport total_loss(const NetworkOutput& out, const Sample& sample, const ClassWeights& weights,
                      const TrainConfig& cfg) {
  LossReport r;
  r.lambda_seg = cfg.lambda_seg;
  r.lambda_boundary = cfg.lambda_boundary;
  r.seg = weighted_ce(out.seg_probs, sample.labels.values, weights, cfg.weighting_mode, cfg.loss_reduction);
  if (!out.boundary_prob.empty()) {
    if (!sample.boundary) throw ValidationError("sample " + sample.id + " has no boundary target");
    r.boundary = boundary_bce(out.boundary_prob, sample.boundary->values, cfg.loss_reduction);
  }
  r.total = cfg.lambda_seg * r.seg + cfg.lambda_boundary * r.boundary;
  if (!std::isfinite(r.total)) throw NumericError("loss is not finite");
  return r;
}

}  // namespace tbnet
