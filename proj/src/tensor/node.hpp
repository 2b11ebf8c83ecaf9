#pragma once

// Graph node internals shared by the op implementations.

#include <functional>
#include <memory>
#include <vector>

#include "tabicl/tensor.hpp"

TABICL_NS_BEGIN
namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<Real>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real(0));
    return grad;
  }
};

/// Gradient buffer of parent `i`, or nullptr when that parent needs none.
inline Real* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

inline const Node& parent(const Node& self, std::size_t i) { return *self.parents[i]; }

/// Wraps an op output. Records history only when recording is enabled and
/// some input requires a gradient. Throws NumericError on non-finite output.
Tensor make_result(const char* op, Shape shape, std::vector<Real> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward_fn);

}  // namespace detail
TABICL_NS_END
