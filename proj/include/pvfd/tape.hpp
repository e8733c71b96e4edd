#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pvfd/params.hpp"
#include "pvfd/tensor.hpp"

namespace pvfd {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Reverse-mode recording of primitive operations. A tape is built for one
// forward pass, replayed backward once, then discarded; it is not shared
// between threads.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  // Input that never receives a gradient.
  Var constant(Tensor value);

  // Leaf that receives a gradient but is not part of a parameter vector.
  Var variable(Tensor value);

  // Leaf bound to a segment of a flat parameter vector; backward() adds its
  // gradient into the matching range of the flat gradient.
  Var parameter(std::span<const double> flat, const ParamSegment& segment);

  // Records an operation result. `backward` is only invoked when at least one
  // input requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Gradient buffer of a node, zero-allocated on first access.
  Tensor& grad(Var v);
  // Gradient after backward(); zeros if the node received none.
  Tensor gradient(Var v) const;

  // Seeds d(output)/d(output) = 1 for a single-element output and replays the
  // tape. Throws if called twice.
  void backward(Var output);

  // Adds parameter-leaf gradients into `flat_grad` at their segment offsets.
  void accumulate_parameter_grads(std::span<double> flat_grad) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
    std::optional<ParamSegment> segment;
  };
  std::vector<Node> nodes_;
  bool replayed_ = false;
};

}  // namespace pvfd
