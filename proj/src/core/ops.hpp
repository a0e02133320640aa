#pragma once

// Primitive kinds recorded on the tape. Each has a shape rule, a forward
// kernel and a vector-Jacobian product in ops.cpp.

#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace corld {

enum class Op {
  Add,
  Sub,
  Mul,
  ScalarMul,
  MatMul,
  Conv2d,
  TransposedConv2d,
  LeakyRelu,
  GroupNorm,
  AvgPool2d,
  AdaptiveAvgPool2d,
  Reshape,  // flatten is reshape with a collapsed tail
  Concat,
  L2Normalize,
  Dot,
  Sum,
  Mean,
  Square,
  Sqrt,
  Log,
  Exp,
  Softmax,
  GridSample,
};

const char* op_name(Op op);

enum class Pad { Zero, Periodic };

struct Attrs {
  double scalar = 0.0;                 // scalar_mul
  int stride_h = 1, stride_w = 1;      // conv2d / transposed_conv2d
  int pad_h = 0, pad_w = 0;
  Pad pad_mode = Pad::Zero;
  double slope = 0.1;                  // leaky_relu
  int groups = 1;                      // group_norm
  double eps = 1e-5;                   // group_norm / l2_normalize
  int kernel_h = 2, kernel_w = 2;      // avg_pool2d
  int out_h = 1, out_w = 1;            // adaptive_avg_pool2d
  int axis = 1;                        // concat / softmax / l2_normalize / flatten
  bool trans_a = false, trans_b = false;  // matmul
  std::vector<int> target_shape;       // reshape
};

// Domain floor for sqrt/log arguments; inputs below it are rejected so the
// contrastive denominators can never go non-finite.
inline constexpr double kDomainEps = 1e-12;

std::vector<int> op_output_shape(Op op, const std::vector<Tensor>& ins, const Attrs& attrs);
void op_forward(Op op, const std::vector<Tensor>& ins, const Attrs& attrs, Tensor& out);

// Accumulates into gins[i] (sized like ins[i]) for every non-null entry.
void op_vjp(Op op, const std::vector<Tensor>& ins, const Attrs& attrs, const Tensor& out,
            const std::vector<double>& gout, const std::vector<std::vector<double>*>& gins);

}  // namespace corld
