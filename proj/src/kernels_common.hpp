#pragma once

// Per-element building blocks shared by the serial and OpenMP kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "gapnas/kernels.hpp"

namespace gapnas::kernels::detail {

inline std::size_t in_index(const ConvGeometry& g, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * g.in_channels + c) * g.in_h + y) * g.in_w + x;
}

inline std::size_t out_index(const ConvGeometry& g, int n, int c, int y, int x) {
  return ((static_cast<std::size_t>(n) * g.out_channels + c) * g.out_h() + y) * g.out_w() + x;
}

inline std::size_t w_index(const ConvGeometry& g, int co, int cl, int ky, int kx) {
  return ((static_cast<std::size_t>(co) * g.in_per_group() + cl) * g.kernel + ky) * g.kernel + kx;
}

inline double conv_output_at(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                             int n, int co, int y, int x) {
  const int ipg = g.in_per_group();
  const int grp = co / g.out_per_group();
  double acc = 0.0;
  for (int cl = 0; cl < ipg; ++cl) {
    const int ci = grp * ipg + cl;
    for (int ky = 0; ky < g.kernel; ++ky) {
      const int iy = y * g.stride - g.padding + ky;
      if (iy < 0 || iy >= g.in_h) continue;
      for (int kx = 0; kx < g.kernel; ++kx) {
        const int ix = x * g.stride - g.padding + kx;
        if (ix < 0 || ix >= g.in_w) continue;
        acc += input[in_index(g, n, ci, iy, ix)] * weight[w_index(g, co, cl, ky, kx)];
      }
    }
  }
  return acc;
}

// Gather form of the input gradient for a single input element.
inline double input_grad_at(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> weight, int n, int ci, int iy, int ix) {
  const int ipg = g.in_per_group(), opg = g.out_per_group();
  const int grp = ci / ipg, cl = ci % ipg;
  const int oh = g.out_h(), ow = g.out_w();
  double acc = 0.0;
  for (int co = grp * opg; co < (grp + 1) * opg; ++co) {
    for (int ky = 0; ky < g.kernel; ++ky) {
      const int ny = iy + g.padding - ky;
      if (ny < 0 || ny % g.stride != 0) continue;
      const int y = ny / g.stride;
      if (y >= oh) continue;
      for (int kx = 0; kx < g.kernel; ++kx) {
        const int nx = ix + g.padding - kx;
        if (nx < 0 || nx % g.stride != 0) continue;
        const int x = nx / g.stride;
        if (x >= ow) continue;
        acc += grad_output[out_index(g, n, co, y, x)] * weight[w_index(g, co, cl, ky, kx)];
      }
    }
  }
  return acc;
}

inline double weight_grad_at(const ConvGeometry& g, std::span<const double> input, std::span<const double> grad_output,
                             int co, int cl, int ky, int kx) {
  const int ci = (co / g.out_per_group()) * g.in_per_group() + cl;
  const int oh = g.out_h(), ow = g.out_w();
  double acc = 0.0;
  for (int n = 0; n < g.batch; ++n)
    for (int y = 0; y < oh; ++y) {
      const int iy = y * g.stride - g.padding + ky;
      if (iy < 0 || iy >= g.in_h) continue;
      for (int x = 0; x < ow; ++x) {
        const int ix = x * g.stride - g.padding + kx;
        if (ix < 0 || ix >= g.in_w) continue;
        acc += input[in_index(g, n, ci, iy, ix)] * grad_output[out_index(g, n, co, y, x)];
      }
    }
  return acc;
}

inline void nearest_plane(int h, int w, std::span<const double> in, std::span<double> out, int p) {
  const std::size_t ib = static_cast<std::size_t>(p) * h * w;
  const std::size_t ob = static_cast<std::size_t>(p) * 4 * h * w;
  const int w2 = 2 * w;
  for (int y = 0; y < 2 * h; ++y)
    for (int x = 0; x < w2; ++x) out[ob + static_cast<std::size_t>(y) * w2 + x] = in[ib + static_cast<std::size_t>(y / 2) * w + x / 2];
}

inline void nearest_plane_backward(int h, int w, std::span<const double> gout, std::span<double> gin, int p) {
  const std::size_t ib = static_cast<std::size_t>(p) * h * w;
  const std::size_t ob = static_cast<std::size_t>(p) * 4 * h * w;
  const int w2 = 2 * w;
  for (int y = 0; y < 2 * h; ++y)
    for (int x = 0; x < w2; ++x) gin[ib + static_cast<std::size_t>(y / 2) * w + x / 2] += gout[ob + static_cast<std::size_t>(y) * w2 + x];
}

// Half-pixel (align_corners=false) source coordinate for a 2x upsample.
struct LerpTap {
  int i0;
  int i1;
  double w1;
};

inline LerpTap bilinear_tap(int o, int in_size) {
  double src = (o + 0.5) / 2.0 - 0.5;
  if (src < 0.0) src = 0.0;
  const int i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
  const int i1 = std::min(i0 + 1, in_size - 1);
  return {i0, i1, src - i0};
}

inline void bilinear_plane(int h, int w, std::span<const double> in, std::span<double> out, int p) {
  const std::size_t ib = static_cast<std::size_t>(p) * h * w;
  const std::size_t ob = static_cast<std::size_t>(p) * 4 * h * w;
  const int w2 = 2 * w;
  for (int y = 0; y < 2 * h; ++y) {
    const LerpTap ty = bilinear_tap(y, h);
    for (int x = 0; x < w2; ++x) {
      const LerpTap tx = bilinear_tap(x, w);
      const double v00 = in[ib + static_cast<std::size_t>(ty.i0) * w + tx.i0];
      const double v01 = in[ib + static_cast<std::size_t>(ty.i0) * w + tx.i1];
      const double v10 = in[ib + static_cast<std::size_t>(ty.i1) * w + tx.i0];
      const double v11 = in[ib + static_cast<std::size_t>(ty.i1) * w + tx.i1];
      out[ob + static_cast<std::size_t>(y) * w2 + x] = (1.0 - ty.w1) * ((1.0 - tx.w1) * v00 + tx.w1 * v01) +
                                                       ty.w1 * ((1.0 - tx.w1) * v10 + tx.w1 * v11);
    }
  }
}

inline void bilinear_plane_backward(int h, int w, std::span<const double> gout, std::span<double> gin, int p) {
  const std::size_t ib = static_cast<std::size_t>(p) * h * w;
  const std::size_t ob = static_cast<std::size_t>(p) * 4 * h * w;
  const int w2 = 2 * w;
  for (int y = 0; y < 2 * h; ++y) {
    const LerpTap ty = bilinear_tap(y, h);
    for (int x = 0; x < w2; ++x) {
      const LerpTap tx = bilinear_tap(x, w);
      const double go = gout[ob + static_cast<std::size_t>(y) * w2 + x];
      gin[ib + static_cast<std::size_t>(ty.i0) * w + tx.i0] += go * (1.0 - ty.w1) * (1.0 - tx.w1);
      gin[ib + static_cast<std::size_t>(ty.i0) * w + tx.i1] += go * (1.0 - ty.w1) * tx.w1;
      gin[ib + static_cast<std::size_t>(ty.i1) * w + tx.i0] += go * ty.w1 * (1.0 - tx.w1);
      gin[ib + static_cast<std::size_t>(ty.i1) * w + tx.i1] += go * ty.w1 * tx.w1;
    }
  }
}

}  // namespace gapnas::kernels::detail
