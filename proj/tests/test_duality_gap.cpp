#include <gtest/gtest.h>

#include <cmath>

#include "gapnas/duality_gap.hpp"
#include "gapnas/grad_suite.hpp"
#include "gapnas/ops.hpp"

namespace gapnas {
namespace {

Tensor vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

struct Streams {
  explicit Streams(std::uint64_t seed)
      : d(derive_rng(seed, "gap-inner-D")), g(derive_rng(seed, "gap-inner-G")), e(derive_rng(seed, "gap-eval")) {}
  GapStreams get() { return {&d, &g, &e}; }
  Rng d, g, e;
};

GapConfig quad_config(int steps) {
  GapConfig cfg;
  cfg.steps = steps;
  cfg.inner = AdamConfig{0.05, 0.0, 0.999, 1e-8, 0.0};
  return cfg;
}

TEST(BestResponse, QuadraticGameReachesClosedForm) {
  QuadraticGame q;
  VectorPlayer x("x", vec({1})), y("y", vec({1}));
  Streams s(1);
  const auto br = approx_best_responses(q, x, y, quad_config(200), s.get());
  EXPECT_NEAR(dynamic_cast<VectorPlayer&>(*br.dbar).value()[0], 0.0, 1e-2);
  EXPECT_NEAR(dynamic_cast<VectorPlayer&>(*br.gbar).value()[0], 0.0, 1e-2);
  EXPECT_EQ(x.value()[0], 1.0);
  EXPECT_EQ(y.value()[0], 1.0);
  EXPECT_EQ(br.d_trajectory.size(), 200u);
}

TEST(BestResponse, SingleStepIsOneAdamStep) {
  QuadraticGame q;
  VectorPlayer x("x", vec({0.7})), y("y", vec({-0.4}));
  Streams s(2);
  GapConfig cfg = quad_config(1);
  const auto br = approx_best_responses(q, x, y, cfg, s.get());
  // D̄ minimizes -(x^2 - y^2): gradient 2y. Ḡ minimizes x^2 - y^2: gradient 2x.
  ParamGroup dg("d", {make_param("y", vec({-0.4}))}, cfg.inner);
  ParamGroup gg("g", {make_param("x", vec({0.7}))}, cfg.inner);
  ASSERT_EQ(dg.step(std::vector<Tensor>{vec({-0.8})}), StepStatus::kApplied);
  ASSERT_EQ(gg.step(std::vector<Tensor>{vec({1.4})}), StepStatus::kApplied);
  EXPECT_EQ(dynamic_cast<VectorPlayer&>(*br.dbar).value(), dg.params()[0]->value);
  EXPECT_EQ(dynamic_cast<VectorPlayer&>(*br.gbar).value(), gg.params()[0]->value);
}

TEST(EstimateGap, QuadraticAtOneOne) {
  QuadraticGame q;
  VectorPlayer x("x", vec({1})), y("y", vec({1}));
  Streams s(3);
  const auto rep = estimate_gap(q, x, y, quad_config(200), s.get());
  EXPECT_GE(rep.v_estimate, 1.90);
  EXPECT_LE(rep.v_estimate, 2.00);
  EXPECT_EQ(rep.v_estimate, rep.term_max - rep.term_min);
}

TEST(EstimateGap, ZeroAtNash) {
  for (int steps : {1, 7, 200}) {
    QuadraticGame q(3);
    VectorPlayer x("x", Tensor({3}, 0.0)), y("y", Tensor({3}, 0.0));
    Streams s(4);
    EXPECT_LE(std::abs(estimate_gap(q, x, y, quad_config(steps), s.get()).v_estimate), 1e-6);
    BilinearRegularizedGame b(Tensor({3, 3}, std::vector<double>{1, 2, 0, -1, 0, 1, 0.5, 0.5, 0.5}), 0.5);
    EXPECT_LE(std::abs(estimate_gap(b, x, y, quad_config(steps), s.get()).v_estimate), 1e-6);
  }
}

TEST(EstimateGap, NeverExceedsExactGap) {
  Rng rng = derive_rng(5, "points");
  QuadraticGame q(2);
  BilinearRegularizedGame b(Tensor({2, 2}, std::vector<double>{0.5, -1.0, 1.5, 0.2}), 0.8);
  for (int t = 0; t < 100; ++t) {
    const Tensor px = randn({2}, rng), py = randn({2}, rng);
    for (const AnalyticGame* game : {static_cast<const AnalyticGame*>(&q), static_cast<const AnalyticGame*>(&b)}) {
      VectorPlayer x("x", px), y("y", py);
      Streams s(static_cast<std::uint64_t>(t));
      const auto rep = estimate_gap(*game, x, y, quad_config(200), s.get());
      const double exact = game->exact_gap(px, py);
      EXPECT_LE(rep.v_estimate, exact + 1e-9) << game->name() << " point " << t;
      EXPECT_GE(rep.v_estimate, -1e-6) << game->name() << " point " << t;
    }
  }
}

TEST(EstimateGap, NondecreasingInInnerSteps) {
  QuadraticGame q;
  double prev = -INFINITY;
  for (int steps : {5, 20, 50, 200}) {
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      VectorPlayer x("x", vec({1})), y("y", vec({1}));
      Streams s(seed);
      mean += estimate_gap(q, x, y, quad_config(steps), s.get()).v_estimate / 5.0;
    }
    EXPECT_GE(mean, prev - 1e-6) << "R = " << steps;
    prev = mean;
  }
}

TEST(EstimateGap, DivergingInnerSolveReportsTrajectory) {
  QuadraticGame q;
  VectorPlayer x("x", vec({1})), y("y", vec({1}));
  Streams s(6);
  GapConfig cfg = quad_config(50);
  cfg.inner.lr = 1e300;
  try {
    estimate_gap(q, x, y, cfg, s.get());
    FAIL();
  } catch (const InnerSolverError& e) {
    EXPECT_EQ(e.solver(), "Dbar");
    EXPECT_FALSE(e.trajectory().empty());
    EXPECT_FALSE(std::isfinite(e.trajectory().back()));
  }
}

TEST(EstimateGap, RejectsNonPositiveSteps) {
  QuadraticGame q;
  VectorPlayer x("x", vec({1})), y("y", vec({1}));
  Streams s(7);
  EXPECT_THROW(estimate_gap(q, x, y, quad_config(0), s.get()), ConfigError);
}

// Tiny MLP GAN used for the network-game checks.
struct TinyGan {
  explicit TinyGan(std::uint64_t seed, bool search_d = false) {
    Rng rng = derive_rng(seed, "tiny");
    cfg.width = 6;
    cfg.latent_dim = 3;
    cfg.disc_width = 8;
    data = std::make_shared<Dataset>(make_ring8(64, rng));
    game = std::make_unique<GanGame>(data, AdvLoss::kNonSaturating, 8, cfg.latent_dim);
    g = std::make_unique<GeneratorNet>(GeneratorNet::relaxed(cfg, rng));
    d = std::make_unique<DiscriminatorNet>(search_d ? DiscriminatorNet::relaxed(cfg, rng)
                                                    : DiscriminatorNet::fixed(cfg, rng));
    for (const auto& p : g->arch()) p->value = randn(p->value.shape(), rng, 0.5);
  }
  NetConfig cfg;
  std::shared_ptr<Dataset> data;
  std::unique_ptr<GanGame> game;
  std::unique_ptr<GeneratorNet> g;
  std::unique_ptr<DiscriminatorNet> d;
};

GapConfig net_config(GbarMode mode = GbarMode::kWeightsOnly) {
  GapConfig cfg;
  cfg.steps = 5;
  cfg.inner.lr = 1e-2;
  cfg.gbar = mode;
  return cfg;
}

TEST(EstimateGap, LeavesPlayersUntouched) {
  TinyGan t(8);
  const auto gw = copy_values(t.g->weights());
  const auto ga = copy_values(t.g->arch());
  const auto dw = copy_values(t.d->weights());
  for (auto mode : {GbarMode::kWeightsOnly, GbarMode::kArchOnly, GbarMode::kWeightsAndArch}) {
    Streams s(8);
    const auto rep = estimate_gap(*t.game, *t.g, *t.d, net_config(mode), s.get());
    EXPECT_EQ(rep.v_estimate, rep.term_max - rep.term_min);
    EXPECT_EQ(copy_values(t.g->weights()), gw);
    EXPECT_EQ(copy_values(t.g->arch()), ga);
    EXPECT_EQ(copy_values(t.d->weights()), dw);
  }
}

TEST(EstimateGap, ParallelSolvesMatchSequential) {
  TinyGan a(9), b(9);
  Streams sa(9), sb(9);
  GapConfig seq = net_config();
  GapConfig par = seq;
  par.parallel = true;
  const auto ra = estimate_gap(*a.game, *a.g, *a.d, seq, sa.get());
  const auto rb = estimate_gap(*b.game, *b.g, *b.d, par, sb.get());
  EXPECT_EQ(ra.v_estimate, rb.v_estimate);
  EXPECT_EQ(ra.d_trajectory, rb.d_trajectory);
  EXPECT_EQ(ra.g_trajectory, rb.g_trajectory);
}

TEST(BestResponse, WeightsOnlySharesArchitecture) {
  TinyGan t(10);
  Streams s(10);
  auto br = approx_best_responses(*t.game, *t.g, *t.d, net_config(), s.get());
  auto& gbar = dynamic_cast<GeneratorNet&>(*br.gbar);
  EXPECT_EQ(gbar.arch_params(), t.g->arch_params());
  const Tensor z = randn({4, 3}, *s.get().eval);
  Tape t1;
  const Tensor before = gbar.forward(t1, t1.constant(z)).value();
  t.g->arch()[0]->value[0] += 3.0;  // mutate G's α
  Tape t2;
  EXPECT_NE(gbar.forward(t2, t2.constant(z)).value(), before);

  auto copied = approx_best_responses(*t.game, *t.g, *t.d, net_config(GbarMode::kArchOnly), s.get());
  EXPECT_NE(dynamic_cast<GeneratorNet&>(*copied.gbar).arch_params(), t.g->arch_params());
}

TEST(GapGradient, MatchesFiniteDifferencesAtFixedInnerSolution) {
  TinyGan t(11);
  Streams s(11);
  auto br = approx_best_responses(*t.game, *t.g, *t.d, net_config(), s.get());
  const GameBatch batch = t.game->sample(Split::kValidation, *s.get().eval);
  const ParamList arch = t.g->arch();
  const GapTerms at = evaluate_gap_terms(*t.game, *t.g, *t.d, *br.gbar, *br.dbar, batch, arch);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < arch.size(); ++k) {
    for (std::size_t i = 0; i < arch[k]->value.size(); ++i) {
      const double orig = arch[k]->value[i];
      arch[k]->value[i] = orig + h;
      const double vp = evaluate_gap_terms(*t.game, *t.g, *t.d, *br.gbar, *br.dbar, batch, {}).v;
      arch[k]->value[i] = orig - h;
      const double vm = evaluate_gap_terms(*t.game, *t.g, *t.d, *br.gbar, *br.dbar, batch, {}).v;
      arch[k]->value[i] = orig;
      const double num = (vp - vm) / (2.0 * h);
      const double ana = at.grads[k][i];
      worst = std::max(worst, std::abs(ana - num) / std::max({1.0, std::abs(ana), std::abs(num)}));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GapGradient, SuiteCheckPassesAtTwentyPoints) {
  const SuiteCheck c = check_gap_arch_gradient(20, 1e-4);
  EXPECT_TRUE(c.passed) << c.max_rel_error;
  EXPECT_EQ(c.points, 20);
  EXPECT_LE(c.redrawn, 20);
}

TEST(GapGradient, ArchOnlyRoutesTermMinThroughCopiedArchitecture) {
  TinyGan t(12);
  Streams s(12);
  auto br = approx_best_responses(*t.game, *t.g, *t.d, net_config(GbarMode::kArchOnly), s.get());
  const GameBatch batch = t.game->sample(Split::kValidation, *s.get().eval);
  const ParamList arch = t.g->arch();
  const GapTerms full = evaluate_gap_terms(*t.game, *t.g, *t.d, *br.gbar, *br.dbar, batch, arch);
  Tape tape;
  tape.watch(arch);
  const GradStore only_max = tape.backward(t.game->payoff(tape, *t.g, *br.dbar, batch, {}));
  for (std::size_t k = 0; k < arch.size(); ++k) EXPECT_EQ(full.grads[k], only_max.of(arch[k]));
}

TEST(GapGradient, ZeroWhenEveryCandidateOnEdgeOutputsZero) {
  TinyGan t(13);
  // Zero stem: node 0 is identically zero, so every candidate on cell0.e0
  // outputs zero once the linear biases are zero too. ARCH_ONLY keeps Ḡ's
  // weights (and so its zero edge) fixed and its α out of the gradient.
  for (const auto& p : t.g->weights()) {
    if (p->name.starts_with("G.stem") || p->name.starts_with("G.cell0.e0")) p->value.fill(0.0);
  }
  Streams s(13);
  const auto gg = gap_gradient_wrt_arch(*t.game, *t.g, *t.d, net_config(GbarMode::kArchOnly), s.get());
  ASSERT_EQ(gg.arch.size(), 3u);
  EXPECT_EQ(gg.grads[0], Tensor(gg.arch[0]->value.shape(), 0.0));
}

TEST(GapGradient, MixingWeightOfZeroOutputOpGetsNoGradient) {
  Rng rng = derive_rng(14, "mix");
  Tape tape;
  auto w = make_param("w", vec({0.2, 0.5, 0.3}));
  tape.watch(w);
  const std::vector<Var> outs{tape.constant(randn({4, 3}, rng)), tape.constant(Tensor({4, 3}, 0.0)),
                              tape.constant(randn({4, 3}, rng))};
  const Var mixed = mix_outputs(outs, tape.param(w));
  const Var loss = ops::mean(ops::tanh(ops::mul(mixed, tape.constant(randn({4, 3}, rng)))));
  const Tensor g = tape.backward(loss).of(w);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_NE(g[0], 0.0);
}

TEST(GapGradient, SearchableDiscriminatorGetsGradient) {
  TinyGan t(15, true);
  Streams s(15);
  const auto gg = gap_gradient_wrt_arch(*t.game, *t.g, *t.d, net_config(), s.get());
  EXPECT_EQ(gg.arch.size(), t.g->arch().size() + t.d->arch().size());
  double norm = 0.0;
  for (std::size_t k = t.g->arch().size(); k < gg.arch.size(); ++k) norm += dot(gg.grads[k], gg.grads[k]);
  EXPECT_GT(norm, 0.0);
}

TEST(GapGradient, DiscreteGeneratorRejected) {
  TinyGan t(16);
  Rng rng(1);
  auto disc = GeneratorNet::discrete(t.cfg, t.g->genotype(), rng);
  Streams s(16);
  EXPECT_THROW(gap_gradient_wrt_arch(*t.game, disc, *t.d, net_config(), s.get()), ConfigError);
}

TEST(Report, LogRecordIsOneLine) {
  DualityGapReport r;
  r.term_max = 0.5;
  r.term_min = -0.25;
  r.v_estimate = 0.75;
  const std::string line = r.to_log_record();
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_NE(line.find("\"v_estimate\":0.75"), std::string::npos) << line;
}

}  // namespace
}  // namespace gapnas
