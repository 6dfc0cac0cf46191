#include "gapnas/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "gapnas/duality_gap.hpp"
#include "gapnas/error.hpp"
#include "gapnas/grad_check.hpp"
#include "gapnas/ops.hpp"

namespace gapnas {
namespace {

using Body = std::function<Var(Tape&, Var, Rng&)>;

struct PrimitiveCase {
  Shape shape;
  bool kinked;
  Body f;
};

Tensor vec(std::vector<double> v) {
  const auto n = static_cast<std::int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

// Values at least `margin` away from zero, for kinked primitives.
Tensor away_from_kink(const Shape& shape, Rng& rng, double margin = 1e-2) {
  Tensor t = randn(shape, rng);
  for (auto& v : t.data()) {
    while (std::abs(v) < margin) v = standard_normal(rng);
  }
  return t;
}

const std::vector<std::pair<std::string, PrimitiveCase>>& cases() {
  static const auto table = [] {
    std::vector<std::pair<std::string, PrimitiveCase>> out;
    // Random linear read-out so every output coordinate contributes.
    auto add = [&](const char* name, Shape shape, bool kinked, Body body) {
      out.emplace_back(name, PrimitiveCase{std::move(shape), kinked, [body](Tape& t, Var x, Rng& rng) {
                                             const Var y = body(t, x, rng);
                                             return ops::sum(ops::mul(y, t.constant(randn(y.shape(), rng))));
                                           }});
    };
    add("add", {2, 3}, false, [](Tape& t, Var x, Rng& r) { return ops::add(x, t.constant(randn({2, 3}, r))); });
    add("sub", {2, 3}, false, [](Tape& t, Var x, Rng& r) { return ops::sub(t.constant(randn({2, 3}, r)), x); });
    add("mul", {2, 3}, false, [](Tape&, Var x, Rng&) { return ops::mul(x, x); });
    add("scale", {4}, false, [](Tape&, Var x, Rng&) { return ops::scale(x, -1.7); });
    add("scale_var", {4}, false, [](Tape&, Var x, Rng&) { return ops::scale(x, ops::pick(x, 2)); });
    add("bias_add", {3}, false,
        [](Tape& t, Var b, Rng& r) { return ops::bias_add(t.constant(randn({2, 3, 2, 2}, r)), b); });
    add("matmul", {3, 4}, false, [](Tape& t, Var x, Rng& r) { return ops::matmul(t.constant(randn({2, 3}, r)), x); });
    add("linear", {4}, false, [](Tape& t, Var b, Rng& r) {
      return ops::linear(t.constant(randn({3, 2}, r)), t.constant(randn({2, 4}, r)), b);
    });
    add("conv2d", {2, 2, 3, 3}, false,
        [](Tape& t, Var w, Rng& r) { return ops::conv2d(t.constant(randn({2, 2, 5, 5}, r)), w, {1, 1, 1}); });
    add("conv2d_input", {1, 2, 5, 5}, false,
        [](Tape& t, Var x, Rng& r) { return ops::conv2d(x, t.constant(randn({3, 2, 3, 3}, r)), {2, 1, 1}); });
    add("conv2d_separable", {1, 3, 4, 4}, false, [](Tape& t, Var x, Rng& r) {
      return ops::conv2d_separable(x, t.constant(randn({3, 1, 3, 3}, r)), t.constant(randn({2, 3, 1, 1}, r)));
    });
    add("conv2d_transpose", {1, 2, 3, 3}, false,
        [](Tape& t, Var x, Rng& r) { return ops::conv2d_transpose(x, t.constant(randn({2, 3, 2, 2}, r))); });
    add("conv2d_transpose_w", {2, 3, 2, 2}, false,
        [](Tape& t, Var w, Rng& r) { return ops::conv2d_transpose(t.constant(randn({1, 2, 3, 3}, r)), w); });
    add("upsample_nearest", {1, 2, 3, 3}, false, [](Tape&, Var x, Rng&) { return ops::upsample_nearest(x); });
    add("upsample_bilinear", {1, 2, 3, 4}, false, [](Tape&, Var x, Rng&) { return ops::upsample_bilinear(x); });
    add("relu", {6}, true, [](Tape&, Var x, Rng&) { return ops::relu(x); });
    add("leaky_relu", {6}, true, [](Tape&, Var x, Rng&) { return ops::leaky_relu(x, 0.2); });
    add("tanh", {6}, false, [](Tape&, Var x, Rng&) { return ops::tanh(x); });
    add("sigmoid", {6}, false, [](Tape&, Var x, Rng&) { return ops::sigmoid(x); });
    add("softplus", {6}, false, [](Tape&, Var x, Rng&) { return ops::softplus(x); });
    add("softmax", {2, 4}, false, [](Tape&, Var x, Rng&) { return ops::softmax(x); });
    add("batch_norm", {3, 2, 2, 2}, false, [](Tape& t, Var x, Rng& r) {
      ops::BatchNormStats stats(2);
      return ops::batch_norm(x, t.constant(randn({2}, r)), t.constant(randn({2}, r)), stats,
                             ops::BatchNormMode::kTrainFrozen);
    });
    add("batch_norm_eval", {3, 2}, false, [](Tape& t, Var x, Rng&) {
      ops::BatchNormStats stats(2);
      stats.running_mean = vec({0.3, -0.1});
      stats.running_var = vec({2.0, 0.5});
      return ops::batch_norm(x, t.constant(vec({1.5, 0.5})), t.constant(vec({0.1, 0.2})), stats,
                             ops::BatchNormMode::kEval);
    });
    add("reshape", {2, 3}, false, [](Tape&, Var x, Rng&) { return ops::reshape(x, {3, 2}); });
    add("concat", {2, 3}, false, [](Tape& t, Var x, Rng& r) {
      const std::vector<Var> parts{x, t.constant(randn({2, 2}, r))};
      return ops::concat(parts, 1);
    });
    out.emplace_back("mean", PrimitiveCase{{5}, false, [](Tape&, Var x, Rng&) { return ops::mean(ops::mul(x, x)); }});
    out.emplace_back("sum", PrimitiveCase{{5}, false, [](Tape&, Var x, Rng&) { return ops::sum(ops::tanh(x)); }});
    return out;
  }();
  return table;
}

struct TinyGan {
  TinyGan(std::uint64_t seed, bool search_d) {
    Rng rng = derive_rng(seed, "gradcheck-gan");
    cfg.width = 6;
    cfg.latent_dim = 3;
    cfg.disc_width = 8;
    auto data = std::make_shared<const Dataset>(make_ring8(64, rng));
    game = std::make_unique<GanGame>(data, AdvLoss::kNonSaturating, 8, cfg.latent_dim);
    g = std::make_unique<GeneratorNet>(GeneratorNet::relaxed(cfg, rng));
    d = std::make_unique<DiscriminatorNet>(search_d ? DiscriminatorNet::relaxed(cfg, rng)
                                                    : DiscriminatorNet::fixed(cfg, rng));
    for (const auto& p : g->arch()) p->value = randn(p->value.shape(), rng, 0.5);
    for (const auto& p : d->arch()) p->value = randn(p->value.shape(), rng, 0.5);
  }
  NetConfig cfg;
  std::unique_ptr<GanGame> game;
  std::unique_ptr<GeneratorNet> g;
  std::unique_ptr<DiscriminatorNet> d;
};

double rel_error(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// Relative error of dV/dα at one tiny GAN, or a negative value when the
// stencil straddles a relu kink (one-sided slopes disagree).
double gap_point_error(std::uint64_t seed, GbarMode mode, bool search_d) {
  TinyGan t(seed, search_d);
  Rng rd = derive_rng(seed, "gap-inner-D");
  Rng rg = derive_rng(seed, "gap-inner-G");
  Rng re = derive_rng(seed, "gap-eval");
  GapConfig cfg;
  cfg.steps = 5;
  cfg.inner.lr = 1e-2;
  cfg.gbar = mode;
  auto br = approx_best_responses(*t.game, *t.g, *t.d, cfg, {&rd, &rg, &re});
  const GameBatch batch = t.game->sample(Split::kValidation, re);
  ParamList arch = t.g->arch();
  for (const auto& p : t.d->arch()) arch.push_back(p);
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
      const double err = rel_error(at.grads[k][i], num);
      if (err >= 1e-4 && rel_error((vp - at.v) / h, (at.v - vm) / h) > 1e-3) return -1.0;
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

std::vector<std::string> primitive_check_names() {
  std::vector<std::string> names;
  for (const auto& [name, c] : cases()) names.push_back(name);
  return names;
}

SuiteCheck check_primitive(const std::string& name, int points, double tol) {
  const auto it = std::find_if(cases().begin(), cases().end(), [&](const auto& c) { return c.first == name; });
  if (it == cases().end()) throw ConfigError("unknown primitive check '" + name + "'");
  const PrimitiveCase& c = it->second;
  SuiteCheck out{name, points, 0.0, true, 0};
  for (int point = 0; point < points; ++point) {
    Rng rng = derive_rng(static_cast<std::uint64_t>(point), name);
    const Tensor x = c.kinked ? away_from_kink(c.shape, rng) : randn(c.shape, rng);
    const std::uint64_t fseed = rng();
    const auto r = grad_check(
        [&](Tape& t, Var v) {
          Rng frng(fseed);
          return c.f(t, v, frng);
        },
        x);
    out.max_rel_error = std::max(out.max_rel_error, r.finite ? r.max_rel_error : INFINITY);
    out.passed = out.passed && r.passed(tol);
  }
  return out;
}

SuiteCheck check_gap_arch_gradient(int points, double tol) {
  static constexpr GbarMode kModes[] = {GbarMode::kWeightsOnly, GbarMode::kArchOnly, GbarMode::kWeightsAndArch};
  SuiteCheck out{"dV/dalpha", points, 0.0, true, 0};
  std::uint64_t seed = 0;
  for (int point = 0; point < points; ++point) {
    double err = -1.0;
    while (err < 0.0) {
      if (out.redrawn > 10 * points) throw NumericalError("gradcheck: too many degenerate dV/dalpha points");
      err = gap_point_error(seed++, kModes[point % 3], point % 2 == 1);
      if (err < 0.0) ++out.redrawn;
    }
    out.max_rel_error = std::max(out.max_rel_error, err);
  }
  out.passed = out.max_rel_error < tol;
  return out;
}

std::vector<SuiteCheck> run_grad_suite(int points, double tol, const std::function<void(const SuiteCheck&)>& on_check) {
  std::vector<SuiteCheck> out;
  for (const auto& name : primitive_check_names()) {
    out.push_back(check_primitive(name, points, tol));
    if (on_check) on_check(out.back());
  }
  out.push_back(check_gap_arch_gradient(points, tol));
  if (on_check) on_check(out.back());
  return out;
}

}  // namespace gapnas
