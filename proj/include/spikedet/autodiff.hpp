#pragma once

#include "spikedet/tensor.hpp"

#include <functional>
#include <unordered_map>
#include <vector>

namespace spikedet {

class Tape;

/// Handle to a tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Operations append nodes with a backward closure that
/// reads the node's gradient and accumulates into its parents. Parameters
/// are registered by Tensor pointer; their gradients survive under the same
/// key after backward().
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var param(Tensor* p);

  const Tensor& value(Var v) const { return nodes_[check(v)].value; }
  Tensor& mutable_value(Var v) { return nodes_[check(v)].value; }

  /// Gradient buffer of a node, allocated on demand.
  Tensor& grad(Var v);
  bool has_grad(Var v) const;

  void backward(Var out);
  void backward(Var out, const Tensor& seed);
  void zero_grad();

  const Tensor* param_grad(const Tensor* p) const;

  /// Record a new node. `backward` may be empty for non-differentiable or
  /// constant results.
  Var push(Tensor value, std::function<void(Tape&, Var)> backward,
           bool requires_grad = true);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_set = false;
    bool requires_grad = false;
    std::function<void(Tape&, Var)> backward;
  };

  int check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw StateError("Tape: invalid var");
    return v.id;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> params_;
};

// Elementwise / structural ops.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
/// y = c*x with a learnable scalar held in a 1-element parameter tensor.
Var scale_by_param(Tape& t, Var x, Tensor* scalar);
Var concat_channels(Tape& t, Var a, Var b);
/// Mean over the time axis within each sample -> (B,C,H,W).
Var mean_over_time(Tape& t, Var x, int time_steps);
/// Global average pool over H,W -> (N,C,1,1).
Var global_avg_pool(Tape& t, Var x);

/// Softmax cross-entropy over channels of (B,C,1,1) logits, mean over batch.
/// Returns a scalar (1,1,1,1) node.
Var softmax_cross_entropy(Tape& t, Var logits, const std::vector<int>& labels);

std::vector<double> softmax_probs(const Tensor& logits, int sample);

}  // namespace spikedet
