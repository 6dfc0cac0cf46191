#pragma once

#include <functional>
#include <string>
#include <vector>

namespace gapnas {

struct SuiteCheck {
  std::string name;
  int points = 0;
  double max_rel_error = 0.0;
  bool passed = false;
  /// Points redrawn because the finite-difference stencil straddled a kink.
  int redrawn = 0;
};

/// Names of the primitive checks, one per autodiff primitive (plus input and
/// weight variants of the convolutions).
std::vector<std::string> primitive_check_names();

/// Reverse-mode gradient of the named primitive against central differences
/// at `points` random inputs.
SuiteCheck check_primitive(const std::string& name, int points = 20, double tol = 1e-4);

/// dV/dα of the gap estimate (inner solutions fixed) against central
/// differences of V at `points` random tiny GANs, cycling through the Ḡ modes
/// and fixed / searchable discriminators.
SuiteCheck check_gap_arch_gradient(int points = 20, double tol = 1e-4);

/// Every primitive followed by the dV/dα check.
std::vector<SuiteCheck> run_grad_suite(int points = 20, double tol = 1e-4,
                                       const std::function<void(const SuiteCheck&)>& on_check = {});

}  // namespace gapnas
