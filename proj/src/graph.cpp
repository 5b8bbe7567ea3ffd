#include "ren/graph.hpp"

#include <unordered_set>

#include "ren/errors.hpp"

namespace ren {

template <typename T>
Parameter<T>& ParameterSet<T>::add(std::string name, Tensor<T> value) {
  if (find(name)) throw ShapeError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->grad = Tensor<T>(value.shape());
  p->value = std::move(value);
  items_.push_back(std::move(p));
  return *items_.back();
}

template <typename T>
const Parameter<T>* ParameterSet<T>::find(std::string_view name) const {
  for (const auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

template <typename T>
Parameter<T>& ParameterSet<T>::get(std::string_view name) {
  return const_cast<Parameter<T>&>(std::as_const(*this).get(name));
}

template <typename T>
const Parameter<T>& ParameterSet<T>::get(std::string_view name) const {
  const Parameter<T>* p = find(name);
  if (!p) throw ShapeError("no parameter named '" + std::string(name) + "'");
  return *p;
}

template <typename T>
std::size_t ParameterSet<T>::numel() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : items_) {
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor<T>(p->value.shape());
    else p->grad.fill(T(0));
  }
}

template <typename T>
const Tensor<T>& BackwardContext<T>::output() const {
  return *graph_.nodes_[node_].value;
}

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t i) const {
  return *graph_.nodes_[graph_.nodes_[node_].inputs.at(i)].value;
}

template <typename T>
std::size_t BackwardContext<T>::input_count() const {
  return graph_.nodes_[node_].inputs.size();
}

template <typename T>
Tensor<T>* BackwardContext<T>::grad_input(std::size_t i) {
  return graph_.grad_slot(graph_.nodes_[node_].inputs.at(i));
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(const Var<T>& v) {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw GraphError("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(const Var<T>& v) const {
  if (&v.graph() != this || v.id() >= nodes_.size()) throw GraphError("variable does not belong to this graph");
  return nodes_[v.id()];
}

template <typename T>
Var<T> Graph<T>::push(Node n) {
  if (consumed_) throw GraphError("graph already consumed by backward");
  nodes_.push_back(std::move(n));
  Node& stored = nodes_.back();
  if (!stored.param) stored.value = &stored.owned;
  if (!stored.value->all_finite()) throw NumericError("non-finite value produced by '" + stored.op + "'");
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::variable(Tensor<T> value) {
  Node n;
  n.op = "variable";
  n.owned = std::move(value);
  n.needs_grad = true;
  n.keep_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::parameter(Parameter<T>& p) {
  Node n;
  n.op = "parameter:" + p.name;
  n.param = &p;
  n.value = &p.value;
  n.needs_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Graph<T>::record(std::string op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
  Node n;
  n.op = std::move(op);
  n.owned = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var<T>& in : inputs) {
    const Node& src = node(in);
    n.inputs.push_back(in.id());
    n.needs_grad = n.needs_grad || src.needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Graph<T>::grad(const Var<T>& v) const {
  const Node& n = node(v);
  if (n.param) return n.param->grad;
  if (n.grad.empty()) throw GraphError("no gradient recorded for '" + n.op + "'");
  return n.grad;
}

template <typename T>
Tensor<T>* Graph<T>::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return nullptr;
  if (n.param) return &n.param->grad;
  if (n.grad.empty()) n.grad = Tensor<T>(n.value->shape());
  return &n.grad;
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
  Node& root = node(loss);
  if (consumed_) throw GraphError("backward called twice on the same graph");
  if (root.value->size() != 1) throw ShapeError("backward needs a scalar loss, got " + shape_str(root.value->shape()));
  consumed_ = true;
  if (!root.needs_grad) return;

  std::unordered_set<Parameter<T>*> params;
  for (Node& n : nodes_)
    if (n.param && params.insert(n.param).second) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->grad = Tensor<T>(n.param->value.shape());
      else n.param->grad.fill(T(0));
    }

  *grad_slot(loss.id()) = Tensor<T>(root.value->shape(), T(1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.param || n.grad.empty()) continue;
    if (!n.grad.all_finite()) throw NumericError("non-finite gradient flowing into '" + n.op + "'");
    if (n.backward) {
      BackwardContext<T> ctx(*this, id, n.grad);
      n.backward(ctx);
    }
    if (!n.keep_grad) n.grad = Tensor<T>();
  }
  for (Parameter<T>* p : params)
    if (!p->grad.all_finite()) throw NumericError("non-finite gradient for parameter '" + p->name + "'");
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class BackwardContext<float>;
template class BackwardContext<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace ren
