#pragma once

// Recorded operation tape for reverse-mode differentiation. Forward values
// are computed eagerly; backward replays the node list in reverse and
// accumulates into the grad slots of requires_grad leaves. One tape per
// training thread; tensors are immutable once recorded except their grad
// slot, which only backward writes.

#include <unordered_map>
#include <vector>

#include "core/ops.hpp"
#include "core/tensor.hpp"

namespace corld {

class Tape {
 public:
  Tape() = default;

  Tensor apply(Op op, const std::vector<Tensor>& inputs, const Attrs& attrs = {});

  // Fills grad slots of all requires_grad leaves reachable from loss.
  // Gradients of a leaf used on several paths accumulate additively.
  void backward(const Tensor& loss);

  // Re-executes every node from current leaf values, overwriting recorded
  // outputs. In a fixed float mode this reproduces the originals bit-exactly.
  void replay();

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // convenience wrappers
  Tensor add(const Tensor& a, const Tensor& b) { return apply(Op::Add, {a, b}); }
  Tensor sub(const Tensor& a, const Tensor& b) { return apply(Op::Sub, {a, b}); }
  Tensor mul(const Tensor& a, const Tensor& b) { return apply(Op::Mul, {a, b}); }
  Tensor scalar_mul(const Tensor& a, double s) {
    Attrs at;
    at.scalar = s;
    return apply(Op::ScalarMul, {a}, at);
  }
  Tensor sum(const Tensor& a) { return apply(Op::Sum, {a}); }
  Tensor mean(const Tensor& a) { return apply(Op::Mean, {a}); }
  Tensor square(const Tensor& a) { return apply(Op::Square, {a}); }
  Tensor reshape(const Tensor& a, std::vector<int> shape) {
    Attrs at;
    at.target_shape = std::move(shape);
    return apply(Op::Reshape, {a}, at);
  }
  Tensor flatten(const Tensor& a, int axis = 1);
  Tensor leaky_relu(const Tensor& a, double slope = 0.1) {
    Attrs at;
    at.slope = slope;
    return apply(Op::LeakyRelu, {a}, at);
  }

 private:
  struct Node {
    Op op;
    Attrs attrs;
    std::vector<int> in_ids;
    int out_id;
  };

  int slot_of(const Tensor& t, bool as_leaf);

  std::vector<Node> nodes_;
  std::vector<Tensor> slots_;
  std::vector<char> is_leaf_;
  std::vector<char> needs_grad_;
  std::unordered_map<const void*, int> index_;
  bool consumed_ = false;
};

}  // namespace corld
