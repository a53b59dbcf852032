#pragma once

// Reverse-mode autodiff over rank-1/2 float64 tensors. A Tape records ops in
// creation order; backward() walks them in reverse, accumulating gradients
// additively across fan-out. Every op validates shapes and checks its output
// for NaN/Inf.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cneuro/rng.hpp"
#include "cneuro/tensor.hpp"

namespace cneuro {

// Running batch-norm statistics, owned by the caller (the encoder keeps one
// per layer). The tape op updates them in train mode as a side effect.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t d) : running_mean(d), running_var(d) {
    running_var.fill(1.0);
  }
  BatchNormState() = default;
};

class Tape {
 public:
  struct Ref {
    std::size_t idx = static_cast<std::size_t>(-1);
    bool valid() const { return idx != static_cast<std::size_t>(-1); }
  };

  // Leaves. Inputs are constants; params collect gradients.
  Ref input(Tensor v);
  Ref param(Tensor v);

  // (m x k)·(k x n) -> m x n
  Ref matmul(Ref a, Ref b);
  // (m x n)·(n) -> (m)
  Ref matvec(Ref a, Ref x);
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);  // elementwise
  Ref scale(Ref a, double k);
  Ref relu(Ref a);
  Ref sigmoid(Ref a);
  Ref log(Ref a);
  Ref exp(Ref a);
  // max(x, floor); gradient 0 on the clamped side. Clamps are counted.
  Ref clamp_min(Ref a, double floor);
  Ref transpose(Ref a);
  // Stable softmax across each row (rank-2) or across the whole vector
  // (rank-1).
  Ref softmax_rows(Ref a);
  Ref softmax_vec(Ref a);
  // Mean over axis 0: (m x n) -> (n).
  Ref mean_rows(Ref a);
  // Stacks k rank-1 tensors of equal length into a k x n matrix.
  Ref stack_rows(const std::vector<Ref>& rows);
  // Stacks rank-2 tensors of equal width on top of each other.
  Ref concat_rows(const std::vector<Ref>& parts);
  // Rows [begin, begin + count) of a matrix as a count x n block.
  Ref slice_rows(Ref a, std::size_t begin, std::size_t count);
  // v[i] as a length-1 tensor.
  Ref pick(Ref v, std::size_t i);
  Ref sum_all(Ref a);
  Ref abs_sum(Ref a);  // L1; subgradient at 0 is 0
  // Zeroes whole rows (rank-2) or single entries (rank-1) with probability p,
  // scaling survivors by 1/(1-p). Draws from `rng` at record time; eval mode
  // is the caller not emitting this op.
  Ref dropout_rows(Ref a, double p, RandomStream& rng);
  // Batch normalization over axis 0. Train mode normalizes by batch moments
  // and updates `state`; eval mode uses the stored running statistics.
  Ref batch_norm(Ref x, Ref gamma, Ref beta, BatchNormState& state, bool train);

  const Tensor& value(Ref r) const { return nodes_[r.idx].value; }
  const Tensor& grad(Ref r) const;

  // Seeds d(loss)/d(loss)=1 and sweeps the tape once, in reverse. `loss` must
  // be scalar (size 1). A tape can only run backward once.
  void backward(Ref loss);

  std::size_t size() const { return nodes_.size(); }
  // Smallest |input - kink| seen at relu/clamp sites; large values mean
  // finite differences are trustworthy here.
  double kink_distance() const { return kink_distance_; }
  std::size_t clamp_events() const { return clamp_events_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void(Tape&)> back;
  };

  Ref push(Tensor value, bool needs_grad, std::function<void(Tape&)> back,
           const char* op);
  Node& node(Ref r) { return nodes_[r.idx]; }
  void check(Ref r) const;

  std::vector<Node> nodes_;
  bool swept_ = false;
  double kink_distance_ = 1e300;
  std::size_t clamp_events_ = 0;
};

}  // namespace cneuro
