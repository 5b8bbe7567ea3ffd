#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ren/tensor.hpp"

namespace ren {

/// A trainable tensor and its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Named parameters with stable addresses, in insertion order.
template <typename T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value);
  Parameter<T>& get(std::string_view name);
  const Parameter<T>& get(std::string_view name) const;
  const Parameter<T>* find(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *items_[i]; }

  /// Total number of scalars across all parameters.
  std::size_t numel() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> items_;
};

template <typename T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  explicit operator bool() const { return graph_ != nullptr; }

 private:
  friend class Graph<T>;
  Var(Graph<T>* g, std::size_t id) : graph_(g), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// What an operation's backward function sees: its output gradient, the
/// forward values, and accumulators for the inputs that need gradients.
template <typename T>
class BackwardContext {
 public:
  const Tensor<T>& grad_output() const { return *grad_out_; }
  const Tensor<T>& output() const;
  const Tensor<T>& input(std::size_t i) const;
  std::size_t input_count() const;
  /// Accumulate into this; nullptr when input i needs no gradient.
  Tensor<T>* grad_input(std::size_t i);

 private:
  friend class Graph<T>;
  BackwardContext(Graph<T>& g, std::size_t node, const Tensor<T>& grad_out)
      : graph_(g), node_(node), grad_out_(&grad_out) {}

  Graph<T>& graph_;
  std::size_t node_;
  const Tensor<T>* grad_out_;
};

/// Tape of recorded operations. Node ids are assigned in creation order, so
/// inputs always precede their consumers and backward is a reverse sweep.
///
/// Every recorded value is checked for NaN/Inf; so is every gradient during
/// backward. Either raises NumericError naming the op.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(BackwardContext<T>&)>;

  explicit Graph(bool training = false) : training_(training) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }

  Var<T> constant(Tensor<T> value);
  /// Leaf whose gradient is kept after backward (tests, input sensitivity).
  Var<T> variable(Tensor<T> value);
  /// Leaf bound to an external parameter; backward overwrites p.grad.
  Var<T> parameter(Parameter<T>& p);

  Var<T> record(std::string op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward);

  const Tensor<T>& value(const Var<T>& v) const { return *node(v).value; }
  const Tensor<T>& grad(const Var<T>& v) const;
  bool requires_grad(const Var<T>& v) const { return node(v).needs_grad; }
  const std::string& op_name(const Var<T>& v) const { return node(v).op; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Populates gradients of every parameter reachable from `loss` (a
  /// single-element tensor). A graph can be differentiated once.
  void backward(const Var<T>& loss);
  bool consumed() const { return consumed_; }

 private:
  friend class BackwardContext<T>;

  struct Node {
    std::string op;
    Tensor<T> owned;
    const Tensor<T>* value = nullptr;
    Tensor<T> grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    bool keep_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Node& node(const Var<T>& v);
  const Node& node(const Var<T>& v) const;
  Var<T> push(Node n);
  Tensor<T>* grad_slot(std::size_t id);

  std::deque<Node> nodes_;
  bool training_;
  bool consumed_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(*this);
}

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class BackwardContext<float>;
extern template class BackwardContext<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ren
