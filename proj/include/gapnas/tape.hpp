#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gapnas/parameter.hpp"
#include "gapnas/tensor.hpp"

namespace gapnas {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid as long as the
/// tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// What a backward rule sees: the upstream gradient, the node's forward output
/// and inputs, and one accumulator per input (null when that input does not
/// require a gradient). Rules must accumulate, never overwrite.
struct BackwardArgs {
  const Tensor& grad_out;
  const Tensor& out;
  std::span<const Tensor* const> in;
  std::span<Tensor* const> grad_in;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Gradients produced by Tape::backward, keyed by node id. Only nodes that
/// require a gradient have a slot.
class GradStore {
 public:
  bool has(Var v) const;
  /// Gradient of a node; throws if the node has no gradient slot.
  const Tensor& at(Var v) const;
  /// Gradient with respect to a parameter; zeros of the parameter's shape if
  /// the parameter never appeared on the tape or was not watched.
  Tensor of(const ParamPtr& p) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  // Keeps keyed parameters alive so their addresses are never reused.
  std::vector<ParamPtr> pinned_;
};

/// Records primitive applications in execution order for reverse-mode
/// differentiation. One tape per forward pass; discard it afterwards.
///
/// Parameters enter a tape through param(). Only parameters registered with
/// watch() require gradients; everything else is recorded as a constant, which
/// is how a player is frozen while its opponent trains.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void watch(const ParamPtr& p);
  void watch(const ParamList& params);
  bool watching(const ParamPtr& p) const;

  Var constant(Tensor value);
  /// Leaf for a parameter. Repeated calls for the same parameter return the
  /// same node, so gradients from every use accumulate in one place.
  Var param(const ParamPtr& p);

  /// Appends a primitive's output. The backward rule is dropped when no input
  /// requires a gradient.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

  /// Reverse sweep from a scalar loss. Visits nodes in exact reverse
  /// recording order.
  GradStore backward(Var loss) const;

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string_view op;
  };

  void check_owned(Var v, std::string_view op) const;

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
  std::unordered_set<const Parameter*> watched_;
  std::vector<ParamPtr> pinned_;
};

}  // namespace gapnas
