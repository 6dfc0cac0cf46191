#include <gtest/gtest.h>

#include <cmath>

#include "gapnas/adam.hpp"
#include "gapnas/error.hpp"
#include "gapnas/rng.hpp"

namespace gapnas {
namespace {

ParamGroup scalar_group(double theta, AdamConfig cfg) {
  return ParamGroup("g", {make_param("theta", Tensor::scalar(theta))}, cfg);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Rng rng = derive_rng(1, "adam");
  auto p = make_param("w", randn({3, 4}, rng));
  const Tensor before = p->value;
  ParamGroup g("g", {p}, AdamConfig{});
  for (int i = 0; i < 5; ++i) ASSERT_EQ(g.step(std::vector<Tensor>{Tensor({3, 4}, 0.0)}), StepStatus::kApplied);
  EXPECT_EQ(p->value, before);
  EXPECT_EQ(g.step_count(), 5);
}

TEST(Adam, FirstStepMatchesHandRecurrence) {
  AdamConfig cfg{0.001, 0.9, 0.999, 1e-8, 0.0};
  auto g = scalar_group(0.5, cfg);
  ASSERT_EQ(g.step(std::vector<Tensor>{Tensor::scalar(1.0)}), StepStatus::kApplied);
  // m = 0.1, v = 0.001; mhat = 1, vhat = 1; update = lr / (1 + eps).
  const double expected = 0.5 - 0.001 / (1.0 + 1e-8);
  EXPECT_NEAR(g.params()[0]->value.item(), expected, 1e-15);
  EXPECT_NEAR(0.5 - g.params()[0]->value.item(), 0.001, 1e-10);
}

TEST(Adam, DefaultGroupsAreDistinct) {
  const AdamConfig w = default_weight_adam();
  const AdamConfig a = default_arch_adam();
  EXPECT_EQ(w.lr, 2e-4);
  EXPECT_EQ(w.beta1, 0.0);
  EXPECT_EQ(w.beta2, 0.999);
  EXPECT_EQ(w.weight_decay, 0.0);
  EXPECT_EQ(a.lr, 3e-4);
  EXPECT_EQ(a.beta1, 0.5);
  EXPECT_EQ(a.beta2, 0.999);
  EXPECT_EQ(a.weight_decay, 1e-3);
}

TEST(Adam, DecoupledWeightDecayAppliedAfterStep) {
  AdamConfig cfg{0.01, 0.5, 0.999, 1e-8, 0.1};
  auto g = scalar_group(2.0, cfg);
  ASSERT_EQ(g.step(std::vector<Tensor>{Tensor::scalar(0.0)}), StepStatus::kApplied);
  EXPECT_NEAR(g.params()[0]->value.item(), 2.0 - 0.01 * 0.1 * 2.0, 1e-15);
}

TEST(Adam, NonFiniteGradientRejectedWithoutSideEffects) {
  auto a = make_param("a", Tensor({2}, 1.0));
  auto b = make_param("b", Tensor({2}, 2.0));
  ParamGroup g("g", {a, b}, AdamConfig{});
  const auto snap = g.snapshot();
  Tensor bad({2}, 0.5);
  bad[1] = NAN;
  EXPECT_EQ(g.step(std::vector<Tensor>{Tensor({2}, 1.0), bad}), StepStatus::kRejectedNonFinite);
  EXPECT_EQ(a->value, snap.values[0]);
  EXPECT_EQ(b->value, snap.values[1]);
  EXPECT_EQ(g.step_count(), 0);
  EXPECT_EQ(g.slots()[0].m, Tensor({2}, 0.0));
}

TEST(Adam, ShapeMismatchRejected) {
  ParamGroup g("g", {make_param("a", Tensor({2}))}, AdamConfig{});
  EXPECT_THROW((void)g.step(std::vector<Tensor>{Tensor({3})}), ShapeError);
}

TEST(Adam, InvalidConfigurationRejected) {
  EXPECT_THROW(AdamConfig({0.0}).validate(), ConfigError);
  EXPECT_THROW(AdamConfig({1e-3, 1.0}).validate(), ConfigError);
  EXPECT_THROW(AdamConfig({1e-3, 0.9, 0.999, 0.0}).validate(), ConfigError);
  EXPECT_THROW(AdamConfig({1e-3, 0.9, 0.999, 1e-8, -1.0}).validate(), ConfigError);
}

TEST(Adam, ParameterListedTwiceRejected) {
  auto p = make_param("p", Tensor({1}));
  EXPECT_THROW(ParamGroup("g", {p, p}, AdamConfig{}), ConfigError);
}

TEST(Adam, SignFlipFlipsUpdate) {
  Rng rng = derive_rng(2, "sign");
  const Tensor init = randn({6}, rng);
  auto pa = make_param("a", init);
  auto pb = make_param("b", init);
  ParamGroup ga("a", {pa}, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
  ParamGroup gb("b", {pb}, AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 10; ++step) {
    Tensor grad = randn({6}, rng);
    Tensor neg = grad;
    for (auto& v : neg.data()) v = -v;
    ASSERT_EQ(ga.step(std::vector<Tensor>{grad}), StepStatus::kApplied);
    ASSERT_EQ(gb.step(std::vector<Tensor>{neg}), StepStatus::kApplied);
  }
  for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(pa->value[i] - init[i], -(pb->value[i] - init[i]));
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.0};
  auto g = scalar_group(0.0, cfg);
  double prev = 0.0, step = 0.0;
  for (int i = 0; i < 5000; ++i) {
    ASSERT_EQ(g.step(std::vector<Tensor>{Tensor::scalar(3.0)}), StepStatus::kApplied);
    const double now = g.params()[0]->value.item();
    step = prev - now;
    prev = now;
  }
  EXPECT_NEAR(step, 0.01, 1e-9);
}

TEST(Adam, CloneIsIndependent) {
  Rng rng = derive_rng(3, "clone");
  auto p = make_param("w", randn({4}, rng));
  ParamGroup g("g", {p}, AdamConfig{});
  ASSERT_EQ(g.step(std::vector<Tensor>{randn({4}, rng)}), StepStatus::kApplied);
  const Tensor before = p->value;
  const auto slots_before = g.slots()[0].m;
  ParamGroup c = g.clone();
  for (int i = 0; i < 5; ++i) ASSERT_EQ(c.step(std::vector<Tensor>{randn({4}, rng)}), StepStatus::kApplied);
  EXPECT_EQ(p->value, before);
  EXPECT_EQ(g.slots()[0].m, slots_before);
  EXPECT_EQ(g.step_count(), 1);
  EXPECT_NE(c.params()[0]->value, before);
}

TEST(Adam, EmptyGroupSnapshot) {
  ParamGroup g("empty", {}, AdamConfig{});
  const auto snap = g.snapshot();
  EXPECT_TRUE(snap.values.empty());
  EXPECT_TRUE(snap.slots.empty());
  EXPECT_EQ(g.step(std::vector<Tensor>{}), StepStatus::kApplied);
}

TEST(Adam, SnapshotPerturbRestoreRoundTrips) {
  Rng rng = derive_rng(4, "snap");
  auto p = make_param("w", randn({5}, rng));
  ParamGroup g("g", {p}, AdamConfig{});
  ASSERT_EQ(g.step(std::vector<Tensor>{randn({5}, rng)}), StepStatus::kApplied);
  const auto snap = g.snapshot();
  p->value[0] += 1.0;
  ASSERT_EQ(g.step(std::vector<Tensor>{randn({5}, rng)}), StepStatus::kApplied);
  g.restore(snap);
  EXPECT_EQ(p->value, snap.values[0]);
  EXPECT_EQ(g.slots()[0].v, snap.slots[0].v);
  EXPECT_EQ(g.step_count(), snap.step_count);
}

TEST(Adam, ClonedStateMatchesFreshStateFromSnapshot) {
  Rng rng = derive_rng(5, "det");
  auto p = make_param("w", randn({3}, rng));
  ParamGroup g("g", {p}, AdamConfig{0.05, 0.5, 0.9, 1e-8, 0.01});
  ASSERT_EQ(g.step(std::vector<Tensor>{randn({3}, rng)}), StepStatus::kApplied);
  std::vector<Tensor> grads;
  for (int i = 0; i < 7; ++i) grads.push_back(randn({3}, rng));

  ParamGroup a = g.clone();
  const auto snap = g.snapshot();
  auto q = make_param("w", snap.values[0]);
  ParamGroup b("g", {q}, g.config());
  b.set_state(snap.slots, snap.step_count);
  for (const auto& gr : grads) {
    ASSERT_EQ(a.step(std::vector<Tensor>{gr}), StepStatus::kApplied);
    ASSERT_EQ(b.step(std::vector<Tensor>{gr}), StepStatus::kApplied);
  }
  EXPECT_EQ(a.params()[0]->value, q->value);
}

}  // namespace
}  // namespace gapnas
