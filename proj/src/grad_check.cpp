#include "gapnas/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "gapnas/error.hpp"

namespace gapnas {

double eval_scalar(const ScalarFn& f, const Tensor& input) {
  Tape tape;
  Var out = f(tape, tape.constant(input));
  if (out.value().size() != 1) throw ShapeError("grad_check: function output is not scalar: " + shape_str(out.shape()));
  return out.value()[0];
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& input, double fd_step) {
  GradCheckResult r;
  auto x = make_param("x", input);
  {
    Tape tape;
    tape.watch(x);
    Var out = f(tape, tape.param(x));
    GradStore grads = tape.backward(out);
    r.analytic = grads.of(x);
  }
  r.numeric = Tensor(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + fd_step;
    const double fp = eval_scalar(f, probe);
    probe[i] = orig - fd_step;
    const double fm = eval_scalar(f, probe);
    probe[i] = orig;
    r.numeric[i] = (fp - fm) / (2.0 * fd_step);

    const double a = r.analytic[i], n = r.numeric[i];
    if (!std::isfinite(a) || !std::isfinite(n)) {
      if (r.finite) r.nonfinite_index = i;
      r.finite = false;
      continue;
    }
    const double err = std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
    if (err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
    }
  }
  return r;
}

}  // namespace gapnas
