#include "gapnas/duality_gap.hpp"

#include <chrono>
#include <cmath>
#include <future>

#include <json.hpp>

#include "gapnas/ops.hpp"

namespace gapnas {

std::string_view gbar_name(GbarMode m) {
  switch (m) {
    case GbarMode::kWeightsOnly:
      return "weights";
    case GbarMode::kArchOnly:
      return "arch";
    case GbarMode::kWeightsAndArch:
      return "both";
  }
  return "?";
}

GbarMode parse_gbar(std::string_view name) {
  if (name == "weights") return GbarMode::kWeightsOnly;
  if (name == "arch") return GbarMode::kArchOnly;
  if (name == "both") return GbarMode::kWeightsAndArch;
  throw ConfigError("unknown gbar mode '" + std::string(name) + "' (weights, arch or both)");
}

void GapConfig::validate() const {
  if (steps < 1) throw ConfigError("duality gap: inner steps R must be >= 1");
  inner.validate();
  inner_arch.validate();
}

InnerSolverError::InnerSolverError(std::string solver, std::vector<double> trajectory)
    : NumericalError("inner solver " + solver + " diverged after " + std::to_string(trajectory.size()) + " steps"),
      solver_(std::move(solver)),
      trajectory_(std::move(trajectory)) {}

namespace {

// R Adam steps on `groups`, minimizing sign * Adv(g, d).
std::vector<double> solve(const Game& game, Player& g, Player& d, std::vector<ParamGroup>& groups, double sign,
                          int steps, Rng& rng, const char* label) {
  std::vector<double> trajectory;
  trajectory.reserve(static_cast<std::size_t>(steps));
  for (int r = 0; r < steps; ++r) {
    const GameBatch batch = game.sample(Split::kValidation, rng);
    Tape tape;
    for (const auto& group : groups) tape.watch(group.params());
    const Var adv = game.payoff(tape, g, d, batch, {&rng, false});
    const Var loss = sign > 0 ? adv : ops::scale(adv, -1.0);
    trajectory.push_back(loss.value().item());
    if (!std::isfinite(trajectory.back())) throw InnerSolverError(label, trajectory);
    const GradStore grads = tape.backward(loss);
    for (auto& group : groups) {
      if (group.step(grads) != StepStatus::kApplied) throw InnerSolverError(label, trajectory);
    }
  }
  return trajectory;
}

std::vector<ParamGroup> gbar_groups(const Player& gbar, const GapConfig& cfg) {
  std::vector<ParamGroup> groups;
  if (cfg.gbar != GbarMode::kArchOnly) groups.emplace_back("omega_Gbar", gbar.weights(), cfg.inner);
  if (cfg.gbar != GbarMode::kWeightsOnly) groups.emplace_back("alpha_Gbar", gbar.arch(), cfg.inner_arch);
  return groups;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

BestResponses approx_best_responses(const Game& game, Player& g, Player& d, const GapConfig& cfg,
                                    const GapStreams& rng) {
  cfg.validate();
  if (rng.inner_d == nullptr || rng.inner_g == nullptr) throw Error("approx_best_responses: missing random streams");
  BestResponses br;
  // D̄ keeps D's architecture; only its weights respond.
  br.dbar = d.clone(Player::ArchCloning::kShare);
  br.gbar = g.clone(cfg.gbar == GbarMode::kWeightsOnly ? Player::ArchCloning::kShare : Player::ArchCloning::kCopy);
  std::vector<ParamGroup> d_groups;
  d_groups.emplace_back("omega_Dbar", br.dbar->weights(), cfg.inner);
  std::vector<ParamGroup> g_groups = gbar_groups(*br.gbar, cfg);

  auto solve_d = [&] { return solve(game, g, *br.dbar, d_groups, -1.0, cfg.steps, *rng.inner_d, "Dbar"); };
  auto solve_g = [&] { return solve(game, *br.gbar, d, g_groups, 1.0, cfg.steps, *rng.inner_g, "Gbar"); };
  if (cfg.parallel) {
    auto d_future = std::async(std::launch::async, solve_d);
    br.g_trajectory = solve_g();
    br.d_trajectory = d_future.get();
  } else {
    br.d_trajectory = solve_d();
    br.g_trajectory = solve_g();
  }
  return br;
}

GapTerms evaluate_gap_terms(const Game& game, Player& g, Player& d, Player& gbar, Player& dbar,
                            const GameBatch& batch, const ParamList& wrt, Rng* gumbel) {
  Tape tape;
  tape.watch(wrt);
  const Var term_max = game.payoff(tape, g, dbar, batch, {gumbel, false});
  const Var term_min = game.payoff(tape, gbar, d, batch, {gumbel, false});
  const Var v = ops::sub(term_max, term_min);
  GapTerms out;
  out.term_max = term_max.value().item();
  out.term_min = term_min.value().item();
  out.v = out.term_max - out.term_min;
  if (!wrt.empty()) {
    const GradStore grads = tape.backward(v);
    for (const auto& p : wrt) out.grads.push_back(grads.of(p));
  }
  return out;
}

namespace {

GapGradient estimate(const Game& game, Player& g, Player& d, const GapConfig& cfg, const GapStreams& rng,
                     const ParamList& wrt) {
  if (rng.eval == nullptr) throw Error("estimate_gap: missing evaluation stream");
  const auto t0 = std::chrono::steady_clock::now();
  BestResponses br = approx_best_responses(game, g, d, cfg, rng);
  const GameBatch batch = game.sample(Split::kValidation, *rng.eval);
  GapTerms terms = evaluate_gap_terms(game, g, d, *br.gbar, *br.dbar, batch, wrt, rng.eval);
  GapGradient out;
  auto& rep = out.report;
  rep.term_max = terms.term_max;
  rep.term_min = terms.term_min;
  rep.v_estimate = rep.term_max - rep.term_min;
  rep.inner_steps = cfg.steps;
  rep.d_trajectory = std::move(br.d_trajectory);
  rep.g_trajectory = std::move(br.g_trajectory);
  rep.wall_seconds = seconds_since(t0);
  if (!std::isfinite(rep.v_estimate)) throw NumericalError("duality gap estimate is not finite");
  out.arch = wrt;
  out.grads = std::move(terms.grads);
  return out;
}

}  // namespace

DualityGapReport estimate_gap(const Game& game, Player& g, Player& d, const GapConfig& cfg, const GapStreams& rng) {
  return estimate(game, g, d, cfg, rng, {}).report;
}

GapGradient gap_gradient_wrt_arch(const Game& game, Player& g, Player& d, const GapConfig& cfg,
                                  const GapStreams& rng) {
  ParamList wrt = g.arch();
  const ParamList d_arch = d.arch();
  wrt.insert(wrt.end(), d_arch.begin(), d_arch.end());
  if (wrt.empty()) throw ConfigError("gap_gradient_wrt_arch: neither player has architecture parameters");
  return estimate(game, g, d, cfg, rng, wrt);
}

std::string DualityGapReport::to_log_record() const {
  nlohmann::ordered_json j;
  j["v_estimate"] = v_estimate;
  j["term_max"] = term_max;
  j["term_min"] = term_min;
  j["inner_steps"] = inner_steps;
  j["d_inner_first"] = d_trajectory.empty() ? 0.0 : d_trajectory.front();
  j["d_inner_last"] = d_trajectory.empty() ? 0.0 : d_trajectory.back();
  j["g_inner_first"] = g_trajectory.empty() ? 0.0 : g_trajectory.front();
  j["g_inner_last"] = g_trajectory.empty() ? 0.0 : g_trajectory.back();
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

}  // namespace gapnas
