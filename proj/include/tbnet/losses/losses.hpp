#pragma once

#include <cstdint>
#include <span>

#include "tbnet/core/config.hpp"
#include "tbnet/core/sample.hpp"
#include "tbnet/data/class_weights.hpp"
#include "tbnet/network/tbnet.hpp"

namespace tbnet {

/// Lower clamp applied to every logarithm argument.
inline constexpr double kLogEpsilon = 1e-12;

struct LossReport {
  double total = 0;
  double seg = 0;
  double boundary = 0;
  double lambda_seg = 1;
  double lambda_boundary = 1;
};

/// Class-weighted segmentation cross-entropy on softmax probabilities.
///
/// probs is (N, C, H, W); labels holds N*H*W class ids in (n, y, x) order.
/// With m ranging over the pixels of image n and c(m) the true class:
///   per_pixel: sum_n sum_m  w[c(m)] * -log p[m, c(m)]
///   per_image: sum_n omega_n * sum_m -log p[m, c(m)],  omega_n = sum_m w[c(m)]
///   none:      sum_n sum_m  -log p[m, c(m)]
/// Reduction::Mean divides per_pixel/none by N*H*W and per_image by N*(H*W)^2
/// (mean class weight times mean cross-entropy, averaged over images).
///
/// Throws NumericError on NaN probabilities, ValidationError on bad labels.
Var weighted_ce(const Var& probs, std::span<const std::uint8_t> labels, const ClassWeights& weights,
                WeightingMode mode, Reduction reduction = Reduction::Mean);
double weighted_ce(const Tensor& probs, std::span<const std::uint8_t> labels, const ClassWeights& weights,
                   WeightingMode mode, Reduction reduction = Reduction::Mean);

/// -[y log p + (1-y) log(1-p)] summed (or averaged) over pixels.
/// Throws ValidationError when target is not {0,1}-valued.
Var boundary_bce(const Var& pred, std::span<const std::uint8_t> target, Reduction reduction = Reduction::Mean);
double boundary_bce(const Tensor& pred, std::span<const std::uint8_t> target,
                    Reduction reduction = Reduction::Mean);

/// Graph-connected dual-task loss for a batch.
struct DualTaskLoss {
  Var total;
  Var seg;
  Var boundary;  // undefined when the network has no boundary stream
  LossReport report() const;
};

/// total = lambda_seg * seg + lambda_boundary * boundary. `mode` is the
/// effective weighting mode (none when class weighting is ablated).
DualTaskLoss dual_task_loss(const ForwardResult& out, std::span<const std::uint8_t> labels,
                            std::span<const std::uint8_t> boundary_targets, const ClassWeights& weights,
                            WeightingMode mode, const TrainConfig& cfg);

/// Single-sample evaluation of the dual-task loss. Requires sample.boundary.
LossReport total_loss(const NetworkOutput& out, const Sample& sample, const ClassWeights& weights,
                      const TrainConfig& cfg);

}  // namespace tbnet
