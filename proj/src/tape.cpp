#include "gapnas/tape.hpp"

#include <string>

#include "gapnas/error.hpp"

namespace gapnas {

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p->value.size();
  return n;
}

std::vector<Tensor> copy_values(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p->value);
  return out;
}

const Tensor& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

bool GradStore::has(Var v) const {
  const auto i = static_cast<std::size_t>(v.id());
  return i < grads_.size() && grads_[i].has_value();
}

const Tensor& GradStore::at(Var v) const {
  if (!has(v)) throw Error("no gradient recorded for node " + std::to_string(v.id()));
  return *grads_[static_cast<std::size_t>(v.id())];
}

Tensor GradStore::of(const ParamPtr& p) const {
  auto it = param_nodes_.find(p.get());
  if (it != param_nodes_.end()) {
    const auto& slot = grads_[static_cast<std::size_t>(it->second)];
    if (slot) return *slot;
  }
  return Tensor(p->value.shape(), 0.0);
}

void Tape::watch(const ParamPtr& p) {
  if (param_nodes_.count(p.get())) throw Error("watch(" + p->name + ") after the parameter was already recorded");
  if (watched_.insert(p.get()).second) pinned_.push_back(p);
}

void Tape::watch(const ParamList& params) {
  for (const auto& p : params) watch(p);
}

bool Tape::watching(const ParamPtr& p) const { return watched_.count(p.get()) > 0; }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false, "constant"});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(const ParamPtr& p) {
  if (auto it = param_nodes_.find(p.get()); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p->value, {}, {}, watched_.count(p.get()) > 0, "param"});
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(p.get(), id);
  if (!watched_.count(p.get())) pinned_.push_back(p);
  return Var(this, id);
}

void Tape::check_owned(Var v, std::string_view op) const {
  if (v.tape() != this) throw Error(std::string(op) + ": input Var belongs to a different tape");
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v, op);
    node.inputs.push_back(v.id());
    node.requires_grad = node.requires_grad || requires_grad(v.id());
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

GradStore Tape::backward(Var loss) const {
  check_owned(loss, "backward");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  GradStore store;
  store.grads_.resize(nodes_.size());
  store.param_nodes_ = param_nodes_;
  store.pinned_ = pinned_;
  for (const auto& [param, id] : param_nodes_) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad) store.grads_[static_cast<std::size_t>(id)] = Tensor(n.value.shape(), 0.0);
  }
  if (!requires_grad(loss.id())) return store;

  store.grads_[static_cast<std::size_t>(loss.id())] = Tensor(loss.shape(), 1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (int i = loss.id(); i >= 0; --i) {
    const Node& node = nodes_[static_cast<std::size_t>(i)];
    auto& gout = store.grads_[static_cast<std::size_t>(i)];
    if (!node.requires_grad || !node.backward || !gout) continue;
    in_values.clear();
    in_grads.clear();
    for (int src : node.inputs) {
      const Node& in = nodes_[static_cast<std::size_t>(src)];
      in_values.push_back(&in.value);
      if (in.requires_grad) {
        auto& slot = store.grads_[static_cast<std::size_t>(src)];
        if (!slot) slot = Tensor(in.value.shape(), 0.0);
        in_grads.push_back(&*slot);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    node.backward(BackwardArgs{*gout, node.value, in_values, in_grads});
  }
  return store;
}

}  // namespace gapnas
