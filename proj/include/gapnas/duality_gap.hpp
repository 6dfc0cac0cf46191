#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gapnas/adam.hpp"
#include "gapnas/error.hpp"
#include "gapnas/games.hpp"

namespace gapnas {

/// What the generator's best response may change.
enum class GbarMode { kWeightsOnly, kArchOnly, kWeightsAndArch };

std::string_view gbar_name(GbarMode m);
GbarMode parse_gbar(std::string_view name);

struct GapConfig {
  /// Adam steps per best-response solve (R).
  int steps = 20;
  AdamConfig inner = default_weight_adam();
  /// Used for the generator's α when gbar is kArchOnly / kWeightsAndArch.
  AdamConfig inner_arch = default_arch_adam();
  GbarMode gbar = GbarMode::kWeightsOnly;
  /// Run the two solves on separate threads. Results are identical to the
  /// sequential order because each solve owns its random stream.
  bool parallel = false;

  void validate() const;
};

/// Random streams for one gap estimate. The inner solvers draw batches (and
/// Gumbel noise) only from their own stream.
struct GapStreams {
  Rng* inner_d = nullptr;
  Rng* inner_g = nullptr;
  Rng* eval = nullptr;
};

/// Raised when an inner solve produces a non-finite loss or gradient.
class InnerSolverError : public NumericalError {
 public:
  InnerSolverError(std::string solver, std::vector<double> trajectory);
  const std::string& solver() const { return solver_; }
  const std::vector<double>& trajectory() const { return trajectory_; }

 private:
  std::string solver_;
  std::vector<double> trajectory_;
};

struct BestResponses {
  std::unique_ptr<Player> gbar;
  std::unique_ptr<Player> dbar;
  /// Objective value before each inner step (D̄ minimizes -Adv, Ḡ minimizes Adv).
  std::vector<double> d_trajectory;
  std::vector<double> g_trajectory;
};

/// Approximate best responses: D̄ takes R Adam steps maximizing Adv(G, .)
/// with G frozen, Ḡ takes R steps minimizing Adv(., D) with D frozen. Both
/// start from copies of the current players with fresh Adam state and draw
/// validation batches. G and D are not modified.
BestResponses approx_best_responses(const Game& game, Player& g, Player& d, const GapConfig& cfg,
                                    const GapStreams& rng);

struct DualityGapReport {
  double v_estimate = 0.0;
  /// Adv(G, D̄)
  double term_max = 0.0;
  /// Adv(Ḡ, D)
  double term_min = 0.0;
  int inner_steps = 0;
  std::vector<double> d_trajectory;
  std::vector<double> g_trajectory;
  double wall_seconds = 0.0;

  /// One-line JSON record.
  std::string to_log_record() const;
};

/// Gap terms for fixed best responses on one batch, plus gradients of
/// V = Adv(G, D̄) - Adv(Ḡ, D) with respect to `wrt` (inner solutions treated
/// as constants).
struct GapTerms {
  double term_max = 0.0;
  double term_min = 0.0;
  double v = 0.0;
  std::vector<Tensor> grads;
};

GapTerms evaluate_gap_terms(const Game& game, Player& g, Player& d, Player& gbar, Player& dbar,
                            const GameBatch& batch, const ParamList& wrt, Rng* gumbel = nullptr);

/// V(G, D) estimate on a fresh validation batch. Nothing in G or D changes.
DualityGapReport estimate_gap(const Game& game, Player& g, Player& d, const GapConfig& cfg, const GapStreams& rng);

struct GapGradient {
  DualityGapReport report;
  /// Architecture parameters of G (then D, if searchable) and dV/dα for each.
  ParamList arch;
  std::vector<Tensor> grads;
};

/// Estimate plus first-order gradient of V with respect to the architecture
/// logits of G and, if it has any, of D. Throws if neither player has α.
GapGradient gap_gradient_wrt_arch(const Game& game, Player& g, Player& d, const GapConfig& cfg,
                                  const GapStreams& rng);

}  // namespace gapnas
