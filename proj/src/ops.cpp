#include "gapnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gapnas/error.hpp"
#include "gapnas/kernels.hpp"

namespace gapnas::ops {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const Shape& a, const Shape& b, std::string_view why = {}) {
  std::string msg = std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b);
  if (!why.empty()) msg += " (" + std::string(why) + ")";
  throw ShapeError(msg);
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a, std::string_view why) {
  throw ShapeError(std::string(op) + ": invalid shape " + shape_str(a) + " (" + std::string(why) + ")");
}

Tape& tape_of(Var a, std::string_view op) {
  if (!a.valid()) throw Error(std::string(op) + ": unbound Var");
  return *a.tape();
}

void require_same(std::string_view op, Var a, Var b) {
  if (a.shape() != b.shape()) shape_fail(op, a.shape(), b.shape());
}

template <class F, class D>
Var unary(std::string_view op, Var x, F f, D dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return tape_of(x, op).record(op, std::move(out), {x}, [dfdx](const BackwardArgs& a) {
    const Tensor& xin = *a.in[0];
    for (std::size_t i = 0; i < xin.size(); ++i) (*a.grad_in[0])[i] += a.grad_out[i] * dfdx(xin[i], a.out[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

kernels::ConvGeometry conv_geometry(std::string_view op, const Shape& xs, const Shape& ws, ConvOptions opt) {
  if (xs.size() != 4 || ws.size() != 4) shape_fail(op, xs, ws, "expected 4-D input and weight");
  kernels::ConvGeometry g;
  g.batch = static_cast<int>(xs[0]);
  g.in_channels = static_cast<int>(xs[1]);
  g.in_h = static_cast<int>(xs[2]);
  g.in_w = static_cast<int>(xs[3]);
  g.out_channels = static_cast<int>(ws[0]);
  g.kernel = static_cast<int>(ws[2]);
  g.stride = opt.stride;
  g.padding = opt.padding;
  g.groups = opt.groups;
  if (ws[2] != ws[3]) shape_fail(op, xs, ws, "kernel must be square");
  if (opt.stride < 1 || opt.padding < 0 || opt.groups < 1) shape_fail(op, xs, ws, "bad stride/padding/groups");
  if (g.in_channels % g.groups || g.out_channels % g.groups || ws[1] != g.in_channels / g.groups) {
    shape_fail(op, xs, ws, "channel/group mismatch");
  }
  if (g.in_h + 2 * g.padding < g.kernel || g.in_w + 2 * g.padding < g.kernel) {
    shape_fail(op, xs, ws, "kernel larger than padded input");
  }
  return g;
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor out = a.value();
  out.add_inplace(b.value());
  return tape_of(a, "add").record("add", std::move(out), {a, b}, [](const BackwardArgs& g) {
    for (int k = 0; k < 2; ++k)
      if (g.grad_in[k]) g.grad_in[k]->add_inplace(g.grad_out);
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return tape_of(a, "sub").record("sub", std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (g.grad_in[0]) g.grad_in[0]->add_inplace(g.grad_out);
    if (g.grad_in[1])
      for (std::size_t i = 0; i < g.grad_out.size(); ++i) (*g.grad_in[1])[i] -= g.grad_out[i];
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape_of(a, "mul").record("mul", std::move(out), {a, b}, [](const BackwardArgs& g) {
    const Tensor& av = *g.in[0];
    const Tensor& bv = *g.in[1];
    if (g.grad_in[0])
      for (std::size_t i = 0; i < av.size(); ++i) (*g.grad_in[0])[i] += g.grad_out[i] * bv[i];
    if (g.grad_in[1])
      for (std::size_t i = 0; i < av.size(); ++i) (*g.grad_in[1])[i] += g.grad_out[i] * av[i];
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  return tape_of(a, "scale").record("scale", std::move(out), {a}, [c](const BackwardArgs& g) {
    for (std::size_t i = 0; i < g.grad_out.size(); ++i) (*g.grad_in[0])[i] += c * g.grad_out[i];
  });
}

Var scale(Var a, Var s) {
  if (s.value().size() != 1) shape_fail("scale", a.shape(), s.shape(), "scale factor must have one element");
  const double c = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.data()) v *= c;
  return tape_of(a, "scale").record("scale", std::move(out), {a, s}, [](const BackwardArgs& g) {
    const Tensor& av = *g.in[0];
    const double c = (*g.in[1])[0];
    if (g.grad_in[0])
      for (std::size_t i = 0; i < av.size(); ++i) (*g.grad_in[0])[i] += c * g.grad_out[i];
    if (g.grad_in[1]) (*g.grad_in[1])[0] += dot(av, g.grad_out);
  });
}

Var shift(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += c;
  return tape_of(a, "shift").record("shift", std::move(out), {a}, [](const BackwardArgs& g) {
    g.grad_in[0]->add_inplace(g.grad_out);
  });
}

Var bias_add(Var x, Var b) {
  const Shape& xs = x.shape();
  if (xs.size() < 2 || b.shape().size() != 1 || b.shape()[0] != xs[1]) shape_fail("bias_add", xs, b.shape());
  const std::size_t n = static_cast<std::size_t>(xs[0]);
  const std::size_t c = static_cast<std::size_t>(xs[1]);
  const std::size_t inner = x.value().size() / (n * c);
  Tensor out = x.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t k = 0; k < inner; ++k) out[(i * c + j) * inner + k] += bv[j];
  return tape_of(x, "bias_add").record("bias_add", std::move(out), {x, b}, [n, c, inner](const BackwardArgs& g) {
    if (g.grad_in[0]) g.grad_in[0]->add_inplace(g.grad_out);
    if (g.grad_in[1])
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
          for (std::size_t k = 0; k < inner; ++k) (*g.grad_in[1])[j] += g.grad_out[(i * c + j) * inner + k];
  });
}

Var matmul(Var a, Var b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) shape_fail("matmul", as, bs);
  const int m = static_cast<int>(as[0]), k = static_cast<int>(as[1]), n = static_cast<int>(bs[1]);
  Tensor out(Shape{m, n});
  kernels::gemm({false, false, m, n, k, false}, a.value().data(), b.value().data(), out.data());
  return tape_of(a, "matmul").record("matmul", std::move(out), {a, b}, [m, n, k](const BackwardArgs& g) {
    // dA = dC * B^T, dB = A^T * dC
    if (g.grad_in[0]) kernels::gemm({false, true, m, k, n, true}, g.grad_out.data(), g.in[1]->data(), g.grad_in[0]->data());
    if (g.grad_in[1]) kernels::gemm({true, false, k, n, m, true}, g.in[0]->data(), g.grad_out.data(), g.grad_in[1]->data());
  });
}

Var linear(Var x, Var w, Var b) { return bias_add(matmul(x, w), b); }

Var conv2d(Var x, Var w, ConvOptions opt) {
  const auto geo = conv_geometry("conv2d", x.shape(), w.shape(), opt);
  Tensor out(Shape{geo.batch, geo.out_channels, geo.out_h(), geo.out_w()});
  kernels::conv2d_forward(geo, x.value().data(), w.value().data(), out.data());
  return tape_of(x, "conv2d").record("conv2d", std::move(out), {x, w}, [geo](const BackwardArgs& g) {
    if (g.grad_in[0]) kernels::conv2d_backward_input(geo, g.grad_out.data(), g.in[1]->data(), g.grad_in[0]->data());
    if (g.grad_in[1]) kernels::conv2d_backward_weight(geo, g.in[0]->data(), g.grad_out.data(), g.grad_in[1]->data());
  });
}

Var conv2d_separable(Var x, Var w_depth, Var w_point) {
  const Shape& xs = x.shape();
  const Shape& ds = w_depth.shape();
  if (xs.size() != 4 || ds.size() != 4 || ds[0] != xs[1] || ds[1] != 1 || ds[2] % 2 == 0) {
    shape_fail("conv2d_separable", xs, ds, "depthwise weight must be [C, 1, k, k] with odd k");
  }
  const int k = static_cast<int>(ds[2]);
  Var depth = conv2d(x, w_depth, {1, (k - 1) / 2, static_cast<int>(xs[1])});
  return conv2d(depth, w_point, {1, 0, 1});
}

Var conv2d_transpose(Var x, Var w, int stride, int padding) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4 || ws[0] != xs[1] || ws[2] != ws[3]) shape_fail("conv2d_transpose", xs, ws);
  const int k = static_cast<int>(ws[2]);
  // Geometry of the forward convolution this operation is the adjoint of.
  kernels::ConvGeometry geo;
  geo.batch = static_cast<int>(xs[0]);
  geo.in_channels = static_cast<int>(ws[1]);
  geo.in_h = (static_cast<int>(xs[2]) - 1) * stride - 2 * padding + k;
  geo.in_w = (static_cast<int>(xs[3]) - 1) * stride - 2 * padding + k;
  geo.out_channels = static_cast<int>(xs[1]);
  geo.kernel = k;
  geo.stride = stride;
  geo.padding = padding;
  if (geo.in_h <= 0 || geo.in_w <= 0 || geo.out_h() != xs[2] || geo.out_w() != xs[3]) {
    shape_fail("conv2d_transpose", xs, ws, "stride/padding do not tile the output");
  }
  Tensor out(Shape{geo.batch, geo.in_channels, geo.in_h, geo.in_w});
  kernels::conv2d_backward_input(geo, x.value().data(), w.value().data(), out.data());
  return tape_of(x, "conv2d_transpose").record("conv2d_transpose", std::move(out), {x, w}, [geo](const BackwardArgs& g) {
    if (g.grad_in[0]) {
      Tensor tmp(g.in[0]->shape());
      kernels::conv2d_forward(geo, g.grad_out.data(), g.in[1]->data(), tmp.data());
      g.grad_in[0]->add_inplace(tmp);
    }
    if (g.grad_in[1]) kernels::conv2d_backward_weight(geo, g.grad_out.data(), g.in[0]->data(), g.grad_in[1]->data());
  });
}

namespace {

template <class Fwd, class Bwd>
Var upsample(std::string_view op, Var x, Fwd fwd, Bwd bwd) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) shape_fail(op, xs, "expected [N, C, H, W]");
  const int planes = static_cast<int>(xs[0] * xs[1]);
  const int h = static_cast<int>(xs[2]), w = static_cast<int>(xs[3]);
  Tensor out(Shape{xs[0], xs[1], 2 * xs[2], 2 * xs[3]});
  fwd(planes, h, w, x.value().data(), out.data());
  return tape_of(x, op).record(op, std::move(out), {x}, [planes, h, w, bwd](const BackwardArgs& g) {
    bwd(planes, h, w, g.grad_out.data(), g.grad_in[0]->data());
  });
}

}  // namespace

Var upsample_nearest(Var x) {
  return upsample("upsample_nearest", x, kernels::upsample_nearest2x, kernels::upsample_nearest2x_backward);
}

Var upsample_bilinear(Var x) {
  return upsample("upsample_bilinear", x, kernels::upsample_bilinear2x, kernels::upsample_bilinear2x_backward);
}

Var relu(Var x) {
  return unary("relu", x, [](double v) { return v > 0 ? v : 0.0; },
               [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var x, double slope) {
  return unary("leaky_relu", x, [slope](double v) { return v > 0 ? v : slope * v; },
               [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Var tanh(Var x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var x) {
  return unary("softplus", x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
               [](double v, double) { return stable_sigmoid(v); });
}

Var softmax(Var x) {
  const Shape& xs = x.shape();
  if (xs.empty()) shape_fail("softmax", xs, "needs at least one axis");
  const std::size_t len = static_cast<std::size_t>(xs.back());
  const std::size_t rows = x.value().size() / len;
  const Tensor& xv = x.value();
  Tensor out(xs);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data().data() + r * len;
    double* o = out.data().data() + r * len;
    const double mx = *std::max_element(in, in + len);
    double z = 0.0;
    for (std::size_t i = 0; i < len; ++i) z += (o[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < len; ++i) o[i] /= z;
  }
  return tape_of(x, "softmax").record("softmax", std::move(out), {x}, [rows, len](const BackwardArgs& g) {
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t i = 0; i < len; ++i) s += g.grad_out[r * len + i] * g.out[r * len + i];
      for (std::size_t i = 0; i < len; ++i)
        (*g.grad_in[0])[r * len + i] += g.out[r * len + i] * (g.grad_out[r * len + i] - s);
    }
  });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, BatchNormMode mode) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) shape_fail("batch_norm", xs, "expected [N, C, ...]");
  const std::size_t n = static_cast<std::size_t>(xs[0]);
  const std::size_t c = static_cast<std::size_t>(xs[1]);
  const std::size_t inner = x.value().size() / (n * c);
  const std::size_t count = n * inner;
  if (gamma.shape() != Shape{xs[1]} || beta.shape() != Shape{xs[1]}) shape_fail("batch_norm", xs, gamma.shape());
  if (stats.running_mean.size() != c) shape_fail("batch_norm", xs, stats.running_mean.shape(), "running stats");
  if (mode != BatchNormMode::kEval && count < 2) shape_fail("batch_norm", xs, "train mode needs >= 2 values per channel");

  const Tensor& xv = x.value();
  std::vector<double> mu(c), inv_std(c);
  if (mode == BatchNormMode::kEval) {
    for (std::size_t j = 0; j < c; ++j) {
      mu[j] = stats.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(stats.running_var[j] + stats.eps);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) s += xv[(i * c + j) * inner + k];
      mu[j] = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < inner; ++k) {
          const double d = xv[(i * c + j) * inner + k] - mu[j];
          v += d * d;
        }
      const double var = v / static_cast<double>(count);
      inv_std[j] = 1.0 / std::sqrt(var + stats.eps);
      if (mode == BatchNormMode::kTrain) {
        const double unbiased = v / static_cast<double>(count - 1);
        stats.running_mean[j] = (1.0 - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
        stats.running_var[j] = (1.0 - stats.momentum) * stats.running_var[j] + stats.momentum * unbiased;
      }
    }
  }

  Tensor xhat(xs);
  Tensor out(xs);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t k = 0; k < inner; ++k) {
        const std::size_t idx = (i * c + j) * inner + k;
        xhat[idx] = (xv[idx] - mu[j]) * inv_std[j];
        out[idx] = gv[j] * xhat[idx] + bv[j];
      }

  const bool batch_stats = mode != BatchNormMode::kEval;
  return tape_of(x, "batch_norm")
      .record("batch_norm", std::move(out), {x, gamma, beta},
              [n, c, inner, count, batch_stats, xhat = std::move(xhat), inv_std](const BackwardArgs& g) {
                const Tensor& gv = *g.in[1];
                for (std::size_t j = 0; j < c; ++j) {
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                      const std::size_t idx = (i * c + j) * inner + k;
                      sum_dy += g.grad_out[idx];
                      sum_dy_xhat += g.grad_out[idx] * xhat[idx];
                    }
                  if (g.grad_in[1]) (*g.grad_in[1])[j] += sum_dy_xhat;
                  if (g.grad_in[2]) (*g.grad_in[2])[j] += sum_dy;
                  if (!g.grad_in[0]) continue;
                  const double cnt = static_cast<double>(count);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < inner; ++k) {
                      const std::size_t idx = (i * c + j) * inner + k;
                      double d = g.grad_out[idx];
                      if (batch_stats) d -= (sum_dy + xhat[idx] * sum_dy_xhat) / cnt;
                      (*g.grad_in[0])[idx] += gv[j] * inv_std[j] * d;
                    }
                }
              });
}

Var mean(Var x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const double inv = 1.0 / static_cast<double>(xv.size());
  return tape_of(x, "mean").record("mean", Tensor::scalar(s * inv), {x}, [inv](const BackwardArgs& g) {
    const double d = g.grad_out[0] * inv;
    for (auto& v : g.grad_in[0]->data()) v += d;
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x, "sum").record("sum", Tensor::scalar(s), {x}, [](const BackwardArgs& g) {
    const double d = g.grad_out[0];
    for (auto& v : g.grad_in[0]->data()) v += d;
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_numel(shape) != x.value().size()) shape_fail("reshape", x.shape(), shape);
  return tape_of(x, "reshape").record("reshape", x.value().reshaped(std::move(shape)), {x}, [](const BackwardArgs& g) {
    g.grad_in[0]->add_inplace(g.grad_out);
  });
}

Var concat(std::span<const Var> xs, int axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = xs[0].shape();
  if (axis < 0 || axis >= static_cast<int>(first.size())) shape_fail("concat", first, "axis out of range");
  const auto ax = static_cast<std::size_t>(axis);
  Shape out_shape = first;
  out_shape[ax] = 0;
  for (const Var& v : xs) {
    const Shape& s = v.shape();
    if (s.size() != first.size()) shape_fail("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != ax && s[d] != first[d]) shape_fail("concat", first, s);
    out_shape[ax] += s[ax];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < ax; ++d) outer *= static_cast<std::size_t>(first[d]);
  for (std::size_t d = ax + 1; d < first.size(); ++d) inner *= static_cast<std::size_t>(first[d]);
  std::vector<std::size_t> widths;
  for (const Var& v : xs) widths.push_back(static_cast<std::size_t>(v.shape()[ax]) * inner);
  const std::size_t total = static_cast<std::size_t>(out_shape[ax]) * inner;

  Tensor out(out_shape);
  std::size_t off = 0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    const Tensor& v = xs[t].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(o * widths[t]), widths[t],
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * total + off));
    off += widths[t];
  }
  return tape_of(xs[0], "concat").record("concat", std::move(out), xs, [outer, total, widths](const BackwardArgs& g) {
    std::size_t off = 0;
    for (std::size_t t = 0; t < widths.size(); ++t) {
      if (g.grad_in[t])
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[t]; ++i) (*g.grad_in[t])[o * widths[t] + i] += g.grad_out[o * total + off + i];
      off += widths[t];
    }
  });
}

Var pick(Var x, std::size_t index) {
  if (index >= x.value().size()) shape_fail("pick", x.shape(), "index " + std::to_string(index) + " out of range");
  return tape_of(x, "pick").record("pick", Tensor::scalar(x.value()[index]), {x}, [index](const BackwardArgs& g) {
    (*g.grad_in[0])[index] += g.grad_out[0];
  });
}

}  // namespace gapnas::ops
