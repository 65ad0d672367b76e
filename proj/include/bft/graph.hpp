#pragma once

#include <cstdint>
// Tape-style reverse-mode differentiation. A Graph records every operation
// of one forward pass in execution order; backward() walks the tape in
// reverse and lets each node push its output gradient to its inputs.
// A Graph is single-threaded; build one per forward pass.

#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

#include "bft/params.hpp"
#include "bft/tensor.hpp"

namespace bft {

template <typename T>
class Graph;

/// Handle to a node of a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
};

template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& grad_out)>;

  explicit Graph(const ParamStore<T>* params = nullptr) : params_(params) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Leaf bound to entry `index` of the graph's ParamStore. Repeated calls
  /// return the same node, so shared weights accumulate one gradient.
  Var<T> param(std::size_t index);
  Var<T> param(const std::string& name);

  /// Appends an operation node. `backward` is dropped when no input needs a
  /// gradient. Throws NumericError if `value` holds NaN/Inf and finite
  /// checking is enabled.
  Var<T> record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);

  const Tensor<T>& value(Var<T> v) const { return node(v).value; }
  bool needs_grad(Var<T> v) const { return node(v).needs_grad; }
  /// Gradient buffer of `v`, zero-allocated on first access.
  Tensor<T>& grad(Var<T> v);
  const Tensor<T>* grad_or_null(Var<T> v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one value.
  void backward(Var<T> loss);

  /// Adds parameter-leaf gradients into `grads` (indexed like the store).
  void accumulate_param_grads(std::vector<Tensor<T>>& grads) const;
  void accumulate_param_grads(ParamStore<T>& store) const;

  const ParamStore<T>* params() const { return params_; }
  std::size_t size() const { return nodes_.size(); }
  void set_check_finite(bool on) { check_finite_ = on; }

  /// Non-smooth ops (relu, abs, clamp, minimum/maximum, max pools) route the
  /// branch each element takes through `branch`. When recording, choices are
  /// logged and hashed into `branch_signature`; when replaying a log, the
  /// logged choices override the computed ones, which evaluates the smooth
  /// piece active at the recorded point. The signature always hashes the
  /// computed choices.
  void record_branches();
  void replay_branches(std::vector<std::uint32_t> log);
  const std::vector<std::uint32_t>& branch_log() const { return branch_log_; }
  std::uint64_t branch_signature() const { return branch_hash_; }
  std::uint32_t branch(std::uint32_t computed) {
    if (branch_mode_ == BranchMode::kFree) return computed;
    return tracked_branch(computed);
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    BackwardFn backward;
    const char* op = "";
    long param = -1;
    bool needs_grad = false;
  };

  const Node& node(Var<T> v) const;
  Node& node(Var<T> v);

  const ParamStore<T>* params_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
  bool check_finite_ = true;
  enum class BranchMode { kFree, kRecord, kReplay };
  std::uint32_t tracked_branch(std::uint32_t computed);

  BranchMode branch_mode_ = BranchMode::kFree;
  std::vector<std::uint32_t> branch_log_;
  std::size_t branch_cursor_ = 0;
  std::uint64_t branch_hash_ = 0xcbf29ce484222325ULL;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(*this);
}

/// Runs a full backward pass into `params`: grads are zeroed first, so
/// parameters the loss does not depend on end with exactly zero gradient.
template <typename T>
void backward(Var<T> loss, Graph<T>& graph, ParamStore<T>& params);

extern template class Graph<float>;
extern template class Graph<double>;
extern template void backward<float>(Var<float>, Graph<float>&, ParamStore<float>&);
extern template void backward<double>(Var<double>, Graph<double>&, ParamStore<double>&);

}  // namespace bft
