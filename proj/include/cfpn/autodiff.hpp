#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cfpn/params.hpp"
#include "cfpn/tensor.hpp"

namespace cfpn {

enum class OpKind {
  kConstant,
  kVariable,
  kParam,
  kConv2d,
  kRelu,
  kSigmoid,
  kBatchNorm,
  kAvgPool,
  kGlobalAvgPool,
  kUpsample,
  kConcat,
  kSlice,
  kFullyConnected,
  kPick,
  kScale,
  kScaleConst,
  kAdd,
  kMul,
  kSum,
  kMean,
  kLoss,
  kCustom,
};

const char* op_name(OpKind kind);

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node list
/// is already a topological order and backward is a single reverse sweep.
///
/// Parameters are bound by reference: the ParamStore must outlive the tape and
/// must not be modified while the tape is in use.
class Tape {
 public:
  /// Receives the node's upstream gradient; accumulates into inputs.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to store.at(name); repeated calls return the same node.
  Var param(const ParamStore& store, const std::string& name);

  /// Appends an op node. The node requires grad iff any input does.
  Var record(OpKind kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(const Var& v) const;
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }
  OpKind kind(const Var& v) const { return nodes_.at(v.id()).kind; }

  /// Gradient buffer of v, zero-initialised on first access.
  Tensor& grad_buffer(const Var& v);
  /// Gradient of v after backward(), or nullptr if none reached it.
  const Tensor* grad(const Var& v) const;

  /// Seeds d(root)/d(root) = 1 and sweeps the tape once in reverse.
  void backward(const Var& root);

  /// Gradient for every learnable parameter in store; zeros where unreachable.
  GradTable param_grads(const ParamStore& store) const;
  /// into[name] += scale * gradient, creating zero entries as needed.
  void accumulate_param_grads(const ParamStore& store, GradTable& into, double scale) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t count(OpKind kind) const;
  /// Number of nodes of the given kind recorded at ids >= from.
  std::size_t count_since(OpKind kind, std::size_t from) const;

  /// Hash of the on/off pattern of every ReLU input on the tape. Two
  /// evaluations with equal signatures lie on the same smooth piece.
  std::uint64_t kink_signature() const;

 private:
  struct Node {
    OpKind kind;
    Tensor owned;
    const Tensor* bound = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Tensor grad;
    bool requires_grad = false;

    const Tensor& value() const { return bound ? *bound : owned; }
  };

  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must live on the same tape.

/// Cross-correlation. x [C,H,W], weight [O,C,k,k], bias [O] or none.
Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, std::size_t stride,
           std::size_t padding);
Var relu(const Var& x);
Var sigmoid(const Var& x);

enum class BnMode { kTrain, kEval };

/// Running statistics owned by a ParamStore.
struct BnRunningStats {
  Tensor* mean = nullptr;
  Tensor* var = nullptr;
};

inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

/// Per-channel normalisation of x [C,H,W]. In train mode uses the spatial
/// statistics of x and, if update_stats, folds them into stats with momentum 0.1.
Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BnRunningStats stats, BnMode mode,
               bool update_stats);

/// Non-overlapping rate x rate mean pooling.
Var avg_pool2d(const Var& x, std::size_t rate);
/// [C,H,W] -> [C].
Var global_avg_pool(const Var& x);
/// Half-pixel-centre bilinear resize with edge clamping. Requires out >= in.
Var bilinear_upsample(const Var& x, std::size_t out_h, std::size_t out_w);
/// Concatenation along axis 0; trailing dims must agree.
Var concat_channels(std::span<const Var> xs);
Var slice_channels(const Var& x, std::size_t begin, std::size_t end);
/// Stacks [C,H_i,W] maps along the row axis into [C,sum H_i,W].
Var stack_rows(std::span<const Var> xs);
/// Rows [begin,end) of a [C,H,W] map.
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
/// y = x^T W + b with x [D_in], W [D_in,D_out], b [D_out].
Var fully_connected(const Var& x, const Var& weight, const Var& bias);
/// Element i of x as a [1] tensor.
Var pick(const Var& x, std::size_t index);
/// x * s with s a [1] node; gradient flows to both.
Var scale_by_scalar(const Var& x, const Var& s);
Var scale(const Var& x, double factor);
Var add(const Var& x, const Var& y);
Var mul(const Var& x, const Var& y);
Var sum(const Var& x);
Var mean(const Var& x);

}  // namespace cfpn
