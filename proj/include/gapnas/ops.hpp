#pragma once

#include <span>
#include <vector>

#include "gapnas/tape.hpp"

// Differentiable primitives. Every function records its output on the tape
// that owns its inputs and throws ShapeError naming the primitive and the
// offending shapes when the shape rule is violated.

namespace gapnas::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// a * s where s holds a single element.
Var scale(Var a, Var s);
/// a + c elementwise.
Var shift(Var a, double c);
/// x + b with b broadcast along axis 1 (features of [N, F] or channels of
/// [N, C, H, W]).
Var bias_add(Var x, Var b);

/// [M, K] x [K, N] -> [M, N].
Var matmul(Var a, Var b);
/// x [N, in] times w [in, out] plus b [out].
Var linear(Var x, Var w, Var b);

struct ConvOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// x [N, Cin, H, W], w [Cout, Cin / groups, k, k].
Var conv2d(Var x, Var w, ConvOptions opt = {});
/// Depthwise k x k (w_depth [C, 1, k, k]) followed by pointwise 1x1
/// (w_point [Cout, C, 1, 1]); padding keeps the spatial size for odd k.
Var conv2d_separable(Var x, Var w_depth, Var w_point);
/// Transposed convolution, the adjoint of conv2d with the same weight,
/// stride and padding. x [N, Cin, H, W], w [Cin, Cout, k, k]; output is
/// [N, Cout, (H - 1) * stride - 2 * padding + k, ...].
Var conv2d_transpose(Var x, Var w, int stride = 2, int padding = 0);

/// Factor-2 spatial upsampling of [N, C, H, W].
Var upsample_nearest(Var x);
/// Factor-2 bilinear upsampling, half-pixel centres (align_corners = false).
Var upsample_bilinear(Var x);

Var relu(Var x);
Var leaky_relu(Var x, double slope);
Var tanh(Var x);
Var sigmoid(Var x);
Var softplus(Var x);
/// Softmax over the last axis.
Var softmax(Var x);

enum class BatchNormMode {
  kTrain,          ///< batch statistics, running statistics updated
  kTrainFrozen,    ///< batch statistics, running statistics left alone
  kEval,           ///< running statistics
};

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormStats(std::int64_t channels = 1)
      : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

/// Per-channel normalization over every axis except 1. `stats` is updated
/// only in kTrain mode.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, BatchNormMode mode);

/// Mean of all elements (rank-0 result).
Var mean(Var x);
/// Sum of all elements (rank-0 result).
Var sum(Var x);
Var reshape(Var x, Shape shape);
Var concat(std::span<const Var> xs, int axis);
/// Single element x[index] as a rank-0 value.
Var pick(Var x, std::size_t index);

}  // namespace gapnas::ops
