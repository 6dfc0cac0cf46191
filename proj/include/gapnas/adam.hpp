#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gapnas/parameter.hpp"
#include "gapnas/tape.hpp"

namespace gapnas {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled: after the Adam update, theta -= lr * weight_decay * theta.
  double weight_decay = 0.0;

  void validate() const;
};

/// Weight group defaults used while searching (lr 2e-4, betas (0.0, 0.999)).
AdamConfig default_weight_adam();
/// Architecture group defaults (lr 3e-4, betas (0.5, 0.999), weight decay 1e-3).
AdamConfig default_arch_adam();

enum class StepStatus { kApplied, kRejectedNonFinite };

struct AdamSlot {
  Tensor m;
  Tensor v;
};

struct GroupSnapshot {
  std::vector<Tensor> values;
  std::vector<AdamSlot> slots;
  std::int64_t step_count = 0;
};

/// A set of parameters updated by one Adam configuration. Holds the moment
/// estimates; parameters themselves stay owned by the networks.
class ParamGroup {
 public:
  ParamGroup() = default;
  ParamGroup(std::string name, ParamList params, AdamConfig config);

  /// One bias-corrected Adam step using gradients read from `grads`. If any
  /// gradient is non-finite nothing is modified and kRejectedNonFinite is
  /// returned.
  [[nodiscard]] StepStatus step(const GradStore& grads);
  [[nodiscard]] StepStatus step(const std::vector<Tensor>& grads);

  const std::string& name() const { return name_; }
  const ParamList& params() const { return params_; }
  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_count_; }
  const std::vector<AdamSlot>& slots() const { return slots_; }
  bool empty() const { return params_.empty(); }

  GroupSnapshot snapshot() const;
  void restore(const GroupSnapshot& snap);
  /// Group over deep copies of the parameters with identical optimizer state;
  /// nothing is shared with this group.
  ParamGroup clone() const;
  /// Same optimizer state applied to a different (shape-compatible) parameter list.
  ParamGroup rebind(ParamList params) const;

  /// Restore moments and step count (checkpoint loading).
  void set_state(std::vector<AdamSlot> slots, std::int64_t step_count);

 private:
  std::string name_;
  ParamList params_;
  AdamConfig config_;
  std::vector<AdamSlot> slots_;
  std::int64_t step_count_ = 0;
};

}  // namespace gapnas
