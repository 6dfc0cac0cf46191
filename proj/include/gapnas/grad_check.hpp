#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "gapnas/tape.hpp"

namespace gapnas {

/// Scalar function of one tensor, expressed on a tape: given the tape and the
/// leaf holding the input, return the scalar output.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;
  /// Coordinate where a non-finite value first appeared (valid when !finite).
  std::size_t nonfinite_index = 0;
  Tensor analytic;
  Tensor numeric;

  bool passed(double tol) const { return finite && max_rel_error < tol; }
};

/// Compares reverse-mode gradients of `f` at `input` with central finite
/// differences of step `fd_step`. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const ScalarFn& f, const Tensor& input, double fd_step = 1e-5);

/// Evaluates f at `input` without recording gradients.
double eval_scalar(const ScalarFn& f, const Tensor& input);

}  // namespace gapnas
