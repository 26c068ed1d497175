#include "tbnet/network/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "tbnet/core/error.hpp"

namespace tbnet::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

bool needs_grad(std::initializer_list<const Var*> inputs) {
  if (!grad_enabled()) return false;
  for (const Var* v : inputs)
    if (v->defined() && v->requires_grad()) return true;
  return false;
}

void im2col(const double* img, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, double* cols) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    const double* src = img + static_cast<std::size_t>(c) * height * width;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        double* dst = cols + row * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          double* line = dst + static_cast<std::size_t>(oh) * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(line, line + out_w, 0.0);
            continue;
          }
          const double* srow = src + static_cast<std::size_t>(ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            line[ow] = (iw >= 0 && iw < width) ? srow[iw] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into the image.
void col2im(const double* cols, int channels, int height, int width, int k, int stride, int pad,
            int out_h, int out_w, double* img) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    double* dst = img + static_cast<std::size_t>(c) * height * width;
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw, ++row) {
        const double* src = cols + row * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= height) continue;
          double* drow = dst + static_cast<std::size_t>(ih) * width;
          const double* line = src + static_cast<std::size_t>(oh) * out_w;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < width) drow[iw] += line[ow];
          }
        }
      }
    }
  }
}

void check_bias(const Var& bias, int channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.shape() != Shape{1, channels, 1, 1})
    throw ShapeError(std::string(op) + ": bias shape " + bias.shape().str() + " does not match " +
                     std::to_string(channels) + " output channels");
}

void add_bias(Tensor& out, const Var& bias) {
  if (!bias.defined()) return;
  const Shape s = out.shape();
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      double* p = out.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      const double b = bias.value()[static_cast<std::size_t>(c)];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
}

Tensor bias_grad(const Tensor& g) {
  const Shape s = g.shape();
  Tensor db({1, s.c, 1, 1}, 0.0);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const double* p = g.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      double acc = 0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      db[static_cast<std::size_t>(c)] += acc;
    }
  return db;
}

struct Interp {
  std::vector<int> i0, i1;
  std::vector<double> w0, w1;
};

Interp interp_table(int in, int out) {
  Interp t;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w0.resize(out);
  t.w1.resize(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    const double frac = src - lo;
    t.i0[o] = lo;
    t.i1[o] = hi;
    t.w1[o] = frac;
    t.w0[o] = 1.0 - frac;
  }
  return t;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w)
    throw ShapeError("conv2d: weight " + ws.str() + " incompatible with input " + xs.str());
  check_bias(bias, ws.n, "conv2d");
  const int k = ws.h;
  const int out_h = (xs.h + 2 * pad - k) / stride + 1;
  const int out_w = (xs.w + 2 * pad - k) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: input " + xs.str() + " too small for kernel");
  const int cout = ws.n;
  const int patch = xs.c * k * k;
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  const std::size_t in_size = static_cast<std::size_t>(xs.c) * xs.h * xs.w;
  const bool direct = k == 1 && stride == 1 && pad == 0;

  Tensor out({xs.n, cout, out_h, out_w});
  std::vector<double> cols(direct ? 0 : static_cast<std::size_t>(patch) * out_plane);
  ConstMatMap wmat(weight.value().data(), cout, patch);
  for (int n = 0; n < xs.n; ++n) {
    const double* src = x.value().data() + n * in_size;
    if (!direct) {
      im2col(src, xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, cols.data());
      src = cols.data();
    }
    MatMap(out.data() + n * cout * out_plane, cout, static_cast<Eigen::Index>(out_plane)).noalias() =
        wmat * ConstMatMap(src, patch, static_cast<Eigen::Index>(out_plane));
  }
  add_bias(out, bias);

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var::from_op(std::move(out), std::move(inputs), [=](detail::Node& node) {
    const Tensor& g = node.grad;
    detail::Node& xn = *node.inputs[0];
    detail::Node& wn = *node.inputs[1];
    std::vector<double> buf(direct ? 0 : static_cast<std::size_t>(patch) * out_plane);
    ConstMatMap wm(wn.value.data(), cout, patch);
    Tensor* dw = wn.requires_grad ? &wn.grad_buffer() : nullptr;
    Tensor* dx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap gn(g.data() + n * cout * out_plane, cout, static_cast<Eigen::Index>(out_plane));
      if (dw) {
        const double* src = xn.value.data() + n * in_size;
        if (!direct) {
          im2col(src, xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, buf.data());
          src = buf.data();
        }
        MatMap(dw->data(), cout, patch).noalias() +=
            gn * ConstMatMap(src, patch, static_cast<Eigen::Index>(out_plane)).transpose();
      }
      if (dx) {
        if (direct) {
          MatMap(dx->data() + n * in_size, patch, static_cast<Eigen::Index>(out_plane)).noalias() +=
              wm.transpose() * gn;
        } else {
          MatMap(buf.data(), patch, static_cast<Eigen::Index>(out_plane)).noalias() = wm.transpose() * gn;
          col2im(buf.data(), xs.c, xs.h, xs.w, k, stride, pad, out_h, out_w, dx->data() + n * in_size);
        }
      }
    }
    if (node.inputs.size() > 2) node.inputs[2]->accumulate(bias_grad(g));
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w)
    throw ShapeError("conv_transpose2d: weight " + ws.str() + " incompatible with input " + xs.str());
  const int k = ws.h;
  const int cout = ws.c;
  check_bias(bias, cout, "conv_transpose2d");
  const int out_h = (xs.h - 1) * stride - 2 * pad + k;
  const int out_w = (xs.w - 1) * stride - 2 * pad + k;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv_transpose2d: non-positive output size");
  const int patch = cout * k * k;
  const std::size_t in_plane = static_cast<std::size_t>(xs.h) * xs.w;
  const std::size_t out_size = static_cast<std::size_t>(cout) * out_h * out_w;

  Tensor out({xs.n, cout, out_h, out_w});
  std::vector<double> cols(static_cast<std::size_t>(patch) * in_plane);
  ConstMatMap wmat(weight.value().data(), xs.c, patch);
  for (int n = 0; n < xs.n; ++n) {
    MatMap(cols.data(), patch, static_cast<Eigen::Index>(in_plane)).noalias() =
        wmat.transpose() *
        ConstMatMap(x.value().data() + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane));
    col2im(cols.data(), cout, out_h, out_w, k, stride, pad, xs.h, xs.w, out.data() + n * out_size);
  }
  add_bias(out, bias);

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Var::from_op(std::move(out), std::move(inputs), [=](detail::Node& node) {
    const Tensor& g = node.grad;
    detail::Node& xn = *node.inputs[0];
    detail::Node& wn = *node.inputs[1];
    std::vector<double> buf(static_cast<std::size_t>(patch) * in_plane);
    ConstMatMap wm(wn.value.data(), xs.c, patch);
    Tensor* dw = wn.requires_grad ? &wn.grad_buffer() : nullptr;
    Tensor* dx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
    for (int n = 0; n < xs.n; ++n) {
      im2col(g.data() + n * out_size, cout, out_h, out_w, k, stride, pad, xs.h, xs.w, buf.data());
      ConstMatMap dcols(buf.data(), patch, static_cast<Eigen::Index>(in_plane));
      if (dx)
        MatMap(dx->data() + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane)).noalias() +=
            wm * dcols;
      if (dw)
        MatMap(dw->data(), xs.c, patch).noalias() +=
            ConstMatMap(xn.value.data() + n * xs.c * in_plane, xs.c, static_cast<Eigen::Index>(in_plane)) *
            dcols.transpose();
    }
    if (node.inputs.size() > 2) node.inputs[2]->accumulate(bias_grad(g));
  });
}

Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
               Tensor& running_var, bool training, double momentum, double eps) {
  const Shape s = x.shape();
  const Shape ps{1, s.c, 1, 1};
  if (gamma.shape() != ps || beta.shape() != ps || running_mean.shape() != ps || running_var.shape() != ps)
    throw ShapeError("batch_norm: parameter shapes do not match input " + s.str());
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);
  std::vector<double> mean(s.c), invstd(s.c);

  for (int c = 0; c < s.c; ++c) {
    if (training) {
      double acc = 0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.value().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      }
      const double m = acc / count;
      double var = 0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.value().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - m) * (p[i] - m);
      }
      var /= count;
      mean[c] = m;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean[c] = (1 - momentum) * running_mean[c] + momentum * m;
      running_var[c] = (1 - momentum) * running_var[c] + momentum * unbiased;
    } else {
      mean[c] = running_mean[c];
      invstd[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }

  Tensor out(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const double* p = x.value().data() + off;
      double* o = out.data() + off;
      const double g = gamma.value()[c], b = beta.value()[c], m = mean[c], is = invstd[c];
      for (std::size_t i = 0; i < plane; ++i) o[i] = g * (p[i] - m) * is + b;
    }

  return Var::from_op(std::move(out), {x, gamma, beta},
                      [=, mean = std::move(mean), invstd = std::move(invstd)](detail::Node& node) {
    const Tensor& g = node.grad;
    detail::Node& xn = *node.inputs[0];
    detail::Node& gn = *node.inputs[1];
    detail::Node& bn = *node.inputs[2];
    Tensor dgamma(ps, 0.0), dbeta(ps, 0.0);
    Tensor* dx = xn.requires_grad ? &xn.grad_buffer() : nullptr;
    for (int c = 0; c < s.c; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < s.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const double* p = xn.value.data() + off;
        const double* dy = g.data() + off;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * (p[i] - mean[c]) * invstd[c];
        }
      }
      dgamma[c] = sum_dy_xhat;
      dbeta[c] = sum_dy;
      if (!dx) continue;
      const double gam = gn.value[c];
      for (int n = 0; n < s.n; ++n) {
        const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
        const double* p = xn.value.data() + off;
        const double* dy = g.data() + off;
        double* d = dx->data() + off;
        if (training) {
          const double k = gam * invstd[c] / count;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (p[i] - mean[c]) * invstd[c];
            d[i] += k * (count * dy[i] - sum_dy - xhat * sum_dy_xhat);
          }
        } else {
          for (std::size_t i = 0; i < plane; ++i) d[i] += dy[i] * gam * invstd[c];
        }
      }
    }
    gn.accumulate(dgamma);
    bn.accumulate(dbeta);
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = v > 0 ? v : 0.0;
  return Var::from_op(std::move(out), {x}, [](detail::Node& node) {
    detail::Node& xn = *node.inputs[0];
    Tensor d = node.grad;
    const double* p = xn.value.data();
    for (std::size_t i = 0; i < d.numel(); ++i)
      if (!(p[i] > 0)) d[i] = 0.0;
    xn.accumulate(d);
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return Var::from_op(out, {x}, [y = out](detail::Node& node) {
    Tensor d = node.grad;
    for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    node.inputs[0]->accumulate(d);
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor out = a.value();
  out.add_(b.value());
  return Var::from_op(std::move(out), {a, b}, [](detail::Node& node) {
    node.inputs[0]->accumulate(node.grad);
    node.inputs[1]->accumulate(node.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: " + a.shape().str() + " vs " + b.shape().str());
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return Var::from_op(std::move(out), {a, b}, [](detail::Node& node) {
    detail::Node& an = *node.inputs[0];
    detail::Node& bn = *node.inputs[1];
    if (an.requires_grad) {
      Tensor d = node.grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= bn.value[i];
      an.accumulate(d);
    }
    if (bn.requires_grad) {
      Tensor d = node.grad;
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] *= an.value[i];
      bn.accumulate(d);
    }
  });
}

Var scale(const Var& x, const Var& s) {
  if (s.value().numel() != 1) throw ShapeError("scale: factor must be a scalar, got " + s.shape().str());
  const double k = s.value()[0];
  Tensor out = x.value();
  for (double& v : out.values()) v *= k;
  return Var::from_op(std::move(out), {x, s}, [](detail::Node& node) {
    detail::Node& xn = *node.inputs[0];
    detail::Node& sn = *node.inputs[1];
    const double k = sn.value[0];
    if (xn.requires_grad) {
      Tensor d = node.grad;
      for (double& v : d.values()) v *= k;
      xn.accumulate(d);
    }
    if (sn.requires_grad) {
      double acc = 0;
      for (std::size_t i = 0; i < node.grad.numel(); ++i) acc += node.grad[i] * xn.value[i];
      sn.accumulate(Tensor(sn.value.shape(), acc));
    }
  });
}

Var scale(const Var& x, double k) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= k;
  return Var::from_op(std::move(out), {x}, [k](detail::Node& node) {
    Tensor d = node.grad;
    for (double& v : d.values()) v *= k;
    node.inputs[0]->accumulate(d);
  });
}

Var scale_channels(const Var& x, const Var& s) {
  const Shape xs = x.shape();
  if (s.shape() != Shape{xs.n, xs.c, 1, 1})
    throw ShapeError("scale_channels: factors " + s.shape().str() + " do not match " + xs.str());
  const std::size_t plane = xs.plane();
  Tensor out = x.value();
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(xs.n) * xs.c; ++nc) {
    const double k = s.value()[nc];
    double* p = out.data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] *= k;
  }
  return Var::from_op(std::move(out), {x, s}, [plane](detail::Node& node) {
    detail::Node& xn = *node.inputs[0];
    detail::Node& sn = *node.inputs[1];
    const std::size_t groups = sn.value.numel();
    if (xn.requires_grad) {
      Tensor d = node.grad;
      for (std::size_t nc = 0; nc < groups; ++nc) {
        double* p = d.data() + nc * plane;
        for (std::size_t i = 0; i < plane; ++i) p[i] *= sn.value[nc];
      }
      xn.accumulate(d);
    }
    if (sn.requires_grad) {
      Tensor d(sn.value.shape(), 0.0);
      for (std::size_t nc = 0; nc < groups; ++nc) {
        const double* g = node.grad.data() + nc * plane;
        const double* v = xn.value.data() + nc * plane;
        double acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += g[i] * v[i];
        d[nc] = acc;
      }
      sn.accumulate(d);
    }
  });
}

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: spatial/batch mismatch " + first.str() + " vs " + s.str());
    channels += s.c;
  }
  const std::size_t plane = first.plane();
  Tensor out({first.n, channels, first.h, first.w});
  std::vector<int> offsets;
  for (int n = 0; n < first.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const std::size_t len = static_cast<std::size_t>(p.shape().c) * plane;
      const double* src = p.value().data() + n * len;
      std::copy(src, src + len, out.data() + (static_cast<std::size_t>(n) * channels + c0) * plane);
      c0 += p.shape().c;
    }
  }
  return Var::from_op(std::move(out), parts, [=](detail::Node& node) {
    int c0 = 0;
    for (auto& in : node.inputs) {
      const int c = in->value.shape().c;
      if (in->requires_grad) {
        Tensor d(in->value.shape());
        const std::size_t len = static_cast<std::size_t>(c) * plane;
        for (int n = 0; n < first.n; ++n) {
          const double* src = node.grad.data() + (static_cast<std::size_t>(n) * channels + c0) * plane;
          std::copy(src, src + len, d.data() + n * len);
        }
        in->accumulate(d);
      }
      c0 += c;
    }
  });
}

Var resize_bilinear(const Var& x, int out_h, int out_w) {
  const Shape s = x.shape();
  if (s.h == out_h && s.w == out_w) return x;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: non-positive target size");
  const Interp ty = interp_table(s.h, out_h);
  const Interp tx = interp_table(s.w, out_w);
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  Tensor out({s.n, s.c, out_h, out_w});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
    const double* src = x.value().data() + nc * in_plane;
    double* dst = out.data() + nc * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const double* r0 = src + static_cast<std::size_t>(ty.i0[oy]) * s.w;
      const double* r1 = src + static_cast<std::size_t>(ty.i1[oy]) * s.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const double top = tx.w0[ox] * r0[tx.i0[ox]] + tx.w1[ox] * r0[tx.i1[ox]];
        const double bot = tx.w0[ox] * r1[tx.i0[ox]] + tx.w1[ox] * r1[tx.i1[ox]];
        dst[static_cast<std::size_t>(oy) * out_w + ox] = ty.w0[oy] * top + ty.w1[oy] * bot;
      }
    }
  }
  return Var::from_op(std::move(out), {x}, [=](detail::Node& node) {
    Tensor d(s, 0.0);
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
      const double* g = node.grad.data() + nc * out_plane;
      double* dst = d.data() + nc * in_plane;
      for (int oy = 0; oy < out_h; ++oy) {
        double* r0 = dst + static_cast<std::size_t>(ty.i0[oy]) * s.w;
        double* r1 = dst + static_cast<std::size_t>(ty.i1[oy]) * s.w;
        for (int ox = 0; ox < out_w; ++ox) {
          const double v = g[static_cast<std::size_t>(oy) * out_w + ox];
          r0[tx.i0[ox]] += ty.w0[oy] * tx.w0[ox] * v;
          r0[tx.i1[ox]] += ty.w0[oy] * tx.w1[ox] * v;
          r1[tx.i0[ox]] += ty.w1[oy] * tx.w0[ox] * v;
          r1[tx.i1[ox]] += ty.w1[oy] * tx.w1[ox] * v;
        }
      }
    }
    node.inputs[0]->accumulate(d);
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out({s.n, s.c, 1, 1});
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
    const double* p = x.value().data() + nc * plane;
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[nc] = acc / static_cast<double>(plane);
  }
  return Var::from_op(std::move(out), {x}, [s, plane](detail::Node& node) {
    Tensor d(s);
    for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
      const double v = node.grad[nc] / static_cast<double>(plane);
      std::fill(d.data() + nc * plane, d.data() + (nc + 1) * plane, v);
    }
    node.inputs[0]->accumulate(d);
  });
}

Var max_pool(const Var& x, int kernel, int stride, int pad) {
  const Shape s = x.shape();
  const int out_h = (s.h + 2 * pad - kernel) / stride + 1;
  const int out_w = (s.w + 2 * pad - kernel) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("max_pool: input " + s.str() + " too small");
  const std::size_t in_plane = s.plane();
  const std::size_t out_plane = static_cast<std::size_t>(out_h) * out_w;
  Tensor out({s.n, s.c, out_h, out_w});
  std::vector<std::size_t> argmax(out.numel());
  for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
    const double* src = x.value().data() + nc * in_plane;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= s.h) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= s.w) continue;
            const std::size_t i = static_cast<std::size_t>(iy) * s.w + ix;
            if (src[i] > best) {
              best = src[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = nc * out_plane + static_cast<std::size_t>(oy) * out_w + ox;
        out[o] = best;
        argmax[o] = nc * in_plane + best_i;
      }
  }
  return Var::from_op(std::move(out), {x}, [s, argmax = std::move(argmax)](detail::Node& node) {
    Tensor d(s, 0.0);
    for (std::size_t o = 0; o < argmax.size(); ++o) d[argmax[o]] += node.grad[o];
    node.inputs[0]->accumulate(d);
  });
}

Var position_attention(const Var& query, const Var& key, const Var& value) {
  const Shape qs = query.shape();
  const Shape vs = value.shape();
  if (key.shape() != qs || vs.n != qs.n || vs.h != qs.h || vs.w != qs.w)
    throw ShapeError("position_attention: query " + qs.str() + ", key " + key.shape().str() + ", value " +
                     vs.str());
  const auto L = static_cast<Eigen::Index>(qs.plane());
  const int dq = qs.c;
  const int dv = vs.c;
  const bool keep = needs_grad({&query, &key, &value});

  Tensor out(vs);
  std::vector<RowMat> attn;
  RowMat a(L, L);
  for (int n = 0; n < qs.n; ++n) {
    ConstMatMap q(query.value().data() + static_cast<std::size_t>(n) * dq * L, dq, L);
    ConstMatMap k(key.value().data() + static_cast<std::size_t>(n) * dq * L, dq, L);
    ConstMatMap v(value.value().data() + static_cast<std::size_t>(n) * dv * L, dv, L);
    a.noalias() = q.transpose() * k;
    a = (1.0 + (-a.array()).exp()).inverse().matrix();
    MatMap(out.data() + static_cast<std::size_t>(n) * dv * L, dv, L).noalias() = v * a.transpose();
    if (keep) attn.push_back(a);
  }
  return Var::from_op(std::move(out), {query, key, value},
                      [=, attn = std::move(attn)](detail::Node& node) {
    detail::Node& qn = *node.inputs[0];
    detail::Node& kn = *node.inputs[1];
    detail::Node& vn = *node.inputs[2];
    RowMat ds(L, L);
    for (int n = 0; n < qs.n; ++n) {
      const RowMat& a = attn[static_cast<std::size_t>(n)];
      ConstMatMap go(node.grad.data() + static_cast<std::size_t>(n) * dv * L, dv, L);
      ConstMatMap q(qn.value.data() + static_cast<std::size_t>(n) * dq * L, dq, L);
      ConstMatMap k(kn.value.data() + static_cast<std::size_t>(n) * dq * L, dq, L);
      ConstMatMap v(vn.value.data() + static_cast<std::size_t>(n) * dv * L, dv, L);
      if (vn.requires_grad)
        MatMap(vn.grad_buffer().data() + static_cast<std::size_t>(n) * dv * L, dv, L).noalias() += go * a;
      if (!qn.requires_grad && !kn.requires_grad) continue;
      ds.noalias() = go.transpose() * v;
      ds = (ds.array() * a.array() * (1.0 - a.array())).matrix();
      if (qn.requires_grad)
        MatMap(qn.grad_buffer().data() + static_cast<std::size_t>(n) * dq * L, dq, L).noalias() +=
            k * ds.transpose();
      if (kn.requires_grad)
        MatMap(kn.grad_buffer().data() + static_cast<std::size_t>(n) * dq * L, dq, L).noalias() += q * ds;
    }
  });
}

Var softmax_channels(const Var& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, x.value()[base + c * plane + i]);
      double z = 0;
      for (int c = 0; c < s.c; ++c) {
        const double e = std::exp(x.value()[base + c * plane + i] - mx);
        out[base + c * plane + i] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) out[base + c * plane + i] /= z;
    }
  }
  return Var::from_op(out, {x}, [s, plane, y = out](detail::Node& node) {
    Tensor d(s);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        double dot = 0;
        for (int c = 0; c < s.c; ++c) dot += node.grad[base + c * plane + i] * y[base + c * plane + i];
        for (int c = 0; c < s.c; ++c) {
          const std::size_t j = base + c * plane + i;
          d[j] = y[j] * (node.grad[j] - dot);
        }
      }
    }
    node.inputs[0]->accumulate(d);
  });
}

Var sum(const Var& x) {
  double acc = 0;
  for (double v : x.value().values()) acc += v;
  return Var::from_op(Tensor::scalar(acc), {x}, [](detail::Node& node) {
    node.inputs[0]->accumulate(Tensor(node.inputs[0]->value.shape(), node.grad[0]));
  });
}

}  // namespace tbnet::ops
