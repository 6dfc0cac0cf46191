#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gapnas/tensor.hpp"

namespace gapnas {

/// A named trainable array. Networks hold parameters through shared pointers
/// so that architecture logits can be shared between cells and between a
/// player and its best-response copy.
struct Parameter {
  std::string name;
  Tensor value;
};

using ParamPtr = std::shared_ptr<Parameter>;
using ParamList = std::vector<ParamPtr>;

inline ParamPtr make_param(std::string name, Tensor value) {
  return std::make_shared<Parameter>(Parameter{std::move(name), std::move(value)});
}

/// Total element count over a parameter list.
std::size_t count_elements(const ParamList& params);

/// Deep copy of every parameter value (used for snapshot comparisons).
std::vector<Tensor> copy_values(const ParamList& params);

}  // namespace gapnas
