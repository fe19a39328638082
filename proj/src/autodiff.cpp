#include "densitydist/autodiff.hpp"

#include <stdexcept>

namespace densitydist {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
  index_.emplace(name, params_.size());
  Tensor grad(value.shape());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
  return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
  return params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(Parameter& parameter) {
  nodes_.push_back(Node{parameter.value, {}, {}, {}, &parameter, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_.at(id).requires_grad;
  Node node{std::move(value), {}, std::move(inputs), {}, nullptr, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.empty() && !node.value.empty()) {
    throw std::logic_error("graph: gradient of node " + std::to_string(id) +
                           " not populated; call backward() first");
  }
  return node.grad;
}

Tensor& Graph::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Graph::backward(Var output) {
  if (&output.graph() != this) throw std::invalid_argument("backward: variable from another graph");
  const std::size_t out = output.id();
  if (nodes_[out].value.size() != 1) {
    throw std::invalid_argument("backward: output must be scalar, got shape " +
                                shape_string(nodes_[out].value.shape()));
  }
  for (auto& node : nodes_) {
    if (node.requires_grad) {
      if (node.grad.size() != node.value.size()) node.grad = Tensor(node.value.shape());
      else node.grad.fill(0.0);
    } else {
      node.grad = Tensor();
    }
  }
  if (!nodes_[out].requires_grad) return;
  nodes_[out].grad[0] = 1.0;
  for (std::size_t i = out + 1; i-- > 0;) {
    if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

void Graph::accumulate_parameter_grads() const {
  for (const auto& node : nodes_) {
    if (node.parameter && node.grad.size() == node.value.size()) {
      node.parameter->grad.axpy(1.0, node.grad);
    }
  }
}

}  // namespace densitydist
