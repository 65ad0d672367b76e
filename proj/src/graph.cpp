#include "bft/graph.hpp"

namespace bft {

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var<T> v) const {
  if (v.graph != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this graph");
  return nodes_[v.id];
}

template <typename T>
typename Graph<T>::Node& Graph<T>::node(Var<T> v) {
  if (v.graph != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this graph");
  return nodes_[v.id];
}

template <typename T>
Var<T> Graph<T>::constant(Tensor<T> value) {
  if (check_finite_ && !value.all_finite()) throw NumericError("non-finite constant");
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::param(std::size_t index) {
  if (params_ == nullptr) throw ContractError("graph has no parameter store");
  if (index >= params_->size()) throw ContractError("parameter index out of range");
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return Var<T>{this, it->second};
  Node n;
  n.value = (*params_)[index].value;
  n.op = "param";
  n.param = static_cast<long>(index);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(index, nodes_.size() - 1);
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Graph<T>::param(const std::string& name) {
  if (params_ == nullptr) throw ContractError("graph has no parameter store");
  return param(params_->index_of(name));
}

template <typename T>
Var<T> Graph<T>::record(const char* op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                        BackwardFn backward) {
  bool needs = false;
  for (const auto& in : inputs) needs = needs || node(in).needs_grad;
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string("non-finite output from op '") + op + "' at node " +
                       std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.needs_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
void Graph<T>::record_branches() {
  branch_mode_ = BranchMode::kRecord;
  branch_log_.clear();
  branch_cursor_ = 0;
}

template <typename T>
void Graph<T>::replay_branches(std::vector<std::uint32_t> log) {
  branch_mode_ = BranchMode::kReplay;
  branch_log_ = std::move(log);
  branch_cursor_ = 0;
}

template <typename T>
std::uint32_t Graph<T>::tracked_branch(std::uint32_t computed) {
  branch_hash_ = (branch_hash_ ^ computed) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL;
  if (branch_mode_ == BranchMode::kRecord) {
    branch_log_.push_back(computed);
    return computed;
  }
  if (branch_cursor_ >= branch_log_.size()) {
    throw ContractError("branch replay: graph makes more branch choices than the recording");
  }
  return branch_log_[branch_cursor_++];
}

template <typename T>
Tensor<T>& Graph<T>::grad(Var<T> v) {
  Node& n = node(v);
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
const Tensor<T>* Graph<T>::grad_or_null(Var<T> v) const {
  const Node& n = node(v);
  return n.grad.empty() ? nullptr : &n.grad;
}

template <typename T>
void Graph<T>::backward(Var<T> loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(root.value.shape()));
  }
  grad(loss).fill(T(1));
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, n.grad);
  }
}

template <typename T>
void Graph<T>::accumulate_param_grads(std::vector<Tensor<T>>& grads) const {
  for (const auto& [index, node_id] : param_nodes_) {
    const Node& n = nodes_[node_id];
    if (n.grad.empty()) continue;
    grads.at(index) += n.grad;
  }
}

template <typename T>
void Graph<T>::accumulate_param_grads(ParamStore<T>& store) const {
  for (const auto& [index, node_id] : param_nodes_) {
    const Node& n = nodes_[node_id];
    if (n.grad.empty()) continue;
    store[index].grad += n.grad;
  }
}

template <typename T>
void backward(Var<T> loss, Graph<T>& graph, ParamStore<T>& params) {
  params.zero_grad();
  graph.backward(loss);
  graph.accumulate_param_grads(params);
}

template class Graph<float>;
template class Graph<double>;
template void backward<float>(Var<float>, Graph<float>&, ParamStore<float>&);
template void backward<double>(Var<double>, Graph<double>&, ParamStore<double>&);

}  // namespace bft
