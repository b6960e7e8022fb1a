#include "cfpn/autodiff.hpp"

#include "cfpn/error.hpp"

namespace cfpn {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kVariable: return "variable";
    case OpKind::kParam: return "param";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kBatchNorm: return "batch_norm";
    case OpKind::kAvgPool: return "avg_pool2d";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kUpsample: return "bilinear_upsample";
    case OpKind::kConcat: return "concat_channels";
    case OpKind::kSlice: return "slice_channels";
    case OpKind::kFullyConnected: return "fully_connected";
    case OpKind::kPick: return "pick";
    case OpKind::kScale: return "scale_by_scalar";
    case OpKind::kScaleConst: return "scale";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kLoss: return "loss";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

Tape& Var::tape() const {
  if (!tape_) throw Error("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(*this); }

void Tape::check_owner(const Var& v) const {
  if (!v.valid() || v.tape_ != this || v.id_ >= nodes_.size()) {
    throw Error("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  Node node{OpKind::kConstant, std::move(value), nullptr, {}, {}, {}, false};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node node{OpKind::kVariable, std::move(value), nullptr, {}, {}, {}, true};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var(this, it->second);
  Node node{OpKind::kParam, {}, &store.at(name), {}, {}, {}, true};
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node{kind, std::move(value), nullptr, {}, std::move(backward), {}, false};
  node.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owner(in);
    node.inputs.push_back(in.id_);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (!node.requires_grad) node.backward = nullptr;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(const Var& v) const {
  check_owner(v);
  return nodes_[v.id_].value();
}

Tensor& Tape::grad_buffer(const Var& v) {
  check_owner(v);
  Node& node = nodes_[v.id_];
  if (node.grad.empty()) node.grad = Tensor(node.value().shape(), 0.0);
  return node.grad;
}

const Tensor* Tape::grad(const Var& v) const {
  check_owner(v);
  const Node& node = nodes_[v.id_];
  return node.grad.empty() ? nullptr : &node.grad;
}

void Tape::backward(const Var& root) {
  check_owner(root);
  if (nodes_[root.id_].value().numel() != 1) {
    throw DimensionError("backward: root must be a scalar, got shape " +
                         to_string(nodes_[root.id_].value().shape()));
  }
  if (backward_done_) throw Error("backward: tape was already differentiated");
  backward_done_ = true;
  grad_buffer(root).fill(1.0);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, node.grad);
  }
}

GradTable Tape::param_grads(const ParamStore& store) const {
  GradTable table;
  for (const auto& name : store.names()) {
    auto it = param_nodes_.find(name);
    const Tensor* g = nullptr;
    if (it != param_nodes_.end() && !nodes_[it->second].grad.empty()) g = &nodes_[it->second].grad;
    table.emplace(name, g ? *g : Tensor::zeros_like(store.at(name)));
  }
  return table;
}

void Tape::accumulate_param_grads(const ParamStore& store, GradTable& into, double scale) const {
  for (const auto& name : store.names()) {
    auto slot = into.find(name);
    if (slot == into.end()) slot = into.emplace(name, Tensor::zeros_like(store.at(name))).first;
    auto it = param_nodes_.find(name);
    if (it == param_nodes_.end() || nodes_[it->second].grad.empty()) continue;
    const Tensor& g = nodes_[it->second].grad;
    Tensor& acc = slot->second;
    for (std::size_t i = 0; i < g.numel(); ++i) acc[i] += scale * g[i];
  }
}

std::size_t Tape::count(OpKind kind) const { return count_since(kind, 0); }

std::size_t Tape::count_since(OpKind kind, std::size_t from) const {
  std::size_t n = 0;
  for (std::size_t i = from; i < nodes_.size(); ++i) n += nodes_[i].kind == kind;
  return n;
}

std::uint64_t Tape::kink_signature() const {
  // FNV-1a over one bit per ReLU input element.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](std::uint64_t byte) {
    h ^= byte;
    h *= 1099511628211ull;
  };
  for (const auto& node : nodes_) {
    if (node.kind != OpKind::kRelu) continue;
    const Tensor& x = nodes_[node.inputs.front()].value();
    std::uint64_t bits = 0;
    std::size_t filled = 0;
    for (double v : x.values()) {
      bits = (bits << 1) | (v > 0.0 ? 1u : 0u);
      if (++filled == 8) {
        mix(bits);
        bits = 0;
        filled = 0;
      }
    }
    mix(bits);
    mix(0xff);
  }
  return h;
}

}  // namespace cfpn
