#include "gapnas/adam.hpp"

#include <cmath>
#include <unordered_set>

#include "gapnas/error.hpp"

namespace gapnas {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("adam: weight_decay must be >= 0");
}

AdamConfig default_weight_adam() { return AdamConfig{2e-4, 0.0, 0.999, 1e-8, 0.0}; }
AdamConfig default_arch_adam() { return AdamConfig{3e-4, 0.5, 0.999, 1e-8, 1e-3}; }

ParamGroup::ParamGroup(std::string name, ParamList params, AdamConfig config)
    : name_(std::move(name)), params_(std::move(params)), config_(config) {
  config_.validate();
  std::unordered_set<const Parameter*> seen;
  for (const auto& p : params_) {
    if (!seen.insert(p.get()).second) throw ConfigError("group " + name_ + ": parameter " + p->name + " listed twice");
    slots_.push_back({Tensor(p->value.shape(), 0.0), Tensor(p->value.shape(), 0.0)});
  }
}

StepStatus ParamGroup::step(const GradStore& grads) {
  std::vector<Tensor> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.push_back(grads.of(p));
  return step(g);
}

StepStatus ParamGroup::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ShapeError("adam_step: gradient count does not match group " + name_);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i]->value.shape()) {
      throw ShapeError("adam_step: gradient " + shape_str(grads[i].shape()) + " for parameter " + params_[i]->name +
                       " of shape " + shape_str(params_[i]->value.shape()));
    }
    if (!grads[i].all_finite()) return StepStatus::kRejectedNonFinite;
  }
  ++step_count_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i]->value.data();
    auto m = slots_[i].m.data();
    auto v = slots_[i].v.data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      if (config_.weight_decay > 0.0) theta[j] -= config_.lr * config_.weight_decay * theta[j];
    }
  }
  return StepStatus::kApplied;
}

GroupSnapshot ParamGroup::snapshot() const { return {copy_values(params_), slots_, step_count_}; }

void ParamGroup::restore(const GroupSnapshot& snap) {
  if (snap.values.size() != params_.size()) throw ShapeError("restore: snapshot does not match group " + name_);
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = snap.values[i];
  slots_ = snap.slots;
  step_count_ = snap.step_count;
}

ParamGroup ParamGroup::clone() const {
  ParamList copies;
  copies.reserve(params_.size());
  for (const auto& p : params_) copies.push_back(make_param(p->name, p->value));
  return rebind(std::move(copies));
}

ParamGroup ParamGroup::rebind(ParamList params) const {
  ParamGroup g(name_, std::move(params), config_);
  for (std::size_t i = 0; i < g.params_.size(); ++i) {
    if (i >= params_.size() || g.params_[i]->value.shape() != params_[i]->value.shape()) {
      throw ShapeError("rebind: parameter list does not match group " + name_);
    }
  }
  if (g.params_.size() != params_.size()) throw ShapeError("rebind: parameter count differs for group " + name_);
  g.slots_ = slots_;
  g.step_count_ = step_count_;
  return g;
}

void ParamGroup::set_state(std::vector<AdamSlot> slots, std::int64_t step_count) {
  if (slots.size() != params_.size()) throw ShapeError("set_state: slot count mismatch for group " + name_);
  slots_ = std::move(slots);
  step_count_ = step_count;
}

}  // namespace gapnas
