#pragma once

#include <vector>

#include "tbnet/network/autograd.hpp"

/// Differentiable NCHW primitives. Every op records its backward pass when
/// gradients are enabled; all are deterministic and single-threaded.
namespace tbnet::ops {

/// weight: (out, in, k, k); bias: (1, out, 1, 1) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

/// weight: (in, out, k, k). Output size is (in-1)*stride - 2*pad + k.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

/// gamma/beta/running stats: (1, C, 1, 1). In training mode normalizes with
/// batch statistics and updates the running buffers in place.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps = 1e-5);

Var relu(const Var& x);
Var sigmoid(const Var& x);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x * s where s is a (1,1,1,1) variable.
Var scale(const Var& x, const Var& s);
/// x * k for a constant k.
Var scale(const Var& x, double k);
/// x[n,c,:,:] * s[n,c].
Var scale_channels(const Var& x, const Var& s);

Var concat_channels(const std::vector<Var>& parts);

/// Half-pixel bilinear resampling (align_corners = false). Same-size input is
/// returned unchanged.
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var global_avg_pool(const Var& x);
Var max_pool(const Var& x, int kernel, int stride, int pad);

/// Per batch item with L = H*W positions: A = sigmoid(Q^T K) (L x L) and
/// out[:, l] = sum_k A[l, k] * V[:, k]. query/key: (N, Dq, H, W); value: (N, D, H, W).
Var position_attention(const Var& query, const Var& key, const Var& value);

/// Softmax across the channel axis at every pixel.
Var softmax_channels(const Var& x);

/// Sum of all entries as a (1,1,1,1) scalar.
Var sum(const Var& x);

}  // namespace tbnet::ops
