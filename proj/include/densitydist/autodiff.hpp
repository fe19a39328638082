#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "densitydist/tensor.hpp"

namespace densitydist {

/// A named trainable array together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

/// Ordered collection of parameters, addressable by name. Insertion order is
/// the iteration order, which keeps checkpoints and optimizer state stable.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }

  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the id order is a topological
/// order and backward() is a single reverse sweep. A graph is used by one
/// thread at a time; independent graphs may run concurrently as long as
/// they do not share Parameter objects being accumulated into.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var param(Parameter& parameter);

  /// Appends a computed node. `backward` receives this graph and the new
  /// node's id and must add into the gradients of `inputs`.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of node `id`, zero-initialized on first access.
  Tensor& grad_buffer(std::size_t id);

  /// Reverse sweep from a scalar output. Any gradients from a previous
  /// call are cleared first.
  void backward(Var output);

  /// Adds the gradients of every param() leaf into Parameter::grad.
  void accumulate_parameter_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

}  // namespace densitydist
