#include "pvfd/tape.hpp"

#include <algorithm>
#include <stdexcept>

#include "pvfd/error.hpp"

namespace pvfd {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, std::nullopt});
  return Var{nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, true, {}, std::nullopt});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(std::span<const double> flat, const ParamSegment& segment) {
  nodes_.push_back(Node{segment_tensor(flat, segment), {}, false, true, {}, segment});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [this](Var v) { return nodes_[v.id].requires_grad; });
  nodes_.push_back(
      Node{std::move(value), {}, false, needs, needs ? std::move(backward) : Backward{},
           std::nullopt});
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_[v.id];
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Tape::backward(Var output) {
  if (replayed_) throw std::logic_error("tape already replayed");
  replayed_ = true;
  if (nodes_[output.id].value.size() != 1) {
    throw DimensionError("backward() needs a single-element output, got " +
                         shape_string(nodes_[output.id].value.shape()));
  }
  grad(output)[0] = 1.0;
  for (std::size_t i = output.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate_parameter_grads(std::span<double> flat_grad) const {
  for (const Node& n : nodes_) {
    if (!n.segment || !n.has_grad) continue;
    const auto& g = n.grad.data();
    double* dst = flat_grad.data() + n.segment->offset;
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
  }
}

}  // namespace pvfd
