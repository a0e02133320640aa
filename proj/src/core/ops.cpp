#include "core/ops.hpp"

#include <algorithm>
#include <cmath>

namespace corld {

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
  fail_invalid("gradcore", std::string(op_name(op)) + ": " + detail);
}

void require(bool ok, Op op, const std::string& detail) {
  if (!ok) shape_fail(op, detail);
}

int64_t prod_range(const std::vector<int>& s, size_t lo, size_t hi) {
  int64_t p = 1;
  for (size_t i = lo; i < hi; ++i) p *= s[i];
  return p;
}

struct AxisView {
  int64_t outer, n, inner;
};

AxisView axis_view(const std::vector<int>& shape, int axis, Op op) {
  require(axis >= 0 && axis < static_cast<int>(shape.size()), op,
          "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  return {prod_range(shape, 0, static_cast<size_t>(axis)), shape[static_cast<size_t>(axis)],
          prod_range(shape, static_cast<size_t>(axis) + 1, shape.size())};
}

// ---- conv index tables -------------------------------------------------

// For every (kernel offset, output position): source index, or -1 when a
// zero-padded read falls outside the image.
std::vector<int> conv_index_table(int out_n, int in_n, int k, int stride, int pad, Pad mode) {
  std::vector<int> tab(static_cast<size_t>(k) * out_n);
  for (int kk = 0; kk < k; ++kk) {
    for (int o = 0; o < out_n; ++o) {
      int i = o * stride - pad + kk;
      if (mode == Pad::Periodic)
        i = wrap_index(i, in_n);
      else if (i < 0 || i >= in_n)
        i = -1;
      tab[static_cast<size_t>(kk) * out_n + o] = i;
    }
  }
  return tab;
}

// Transposed conv scatter targets: for every (kernel offset, input position)
// the output index, or -1 when dropped under zero padding.
std::vector<int> tconv_index_table(int in_n, int out_n, int k, int stride, int pad, Pad mode) {
  std::vector<int> tab(static_cast<size_t>(k) * in_n);
  for (int kk = 0; kk < k; ++kk) {
    for (int i = 0; i < in_n; ++i) {
      int o = i * stride - pad + kk;
      if (mode == Pad::Periodic)
        o = wrap_index(o, out_n);
      else if (o < 0 || o >= out_n)
        o = -1;
      tab[static_cast<size_t>(kk) * in_n + i] = o;
    }
  }
  return tab;
}

struct Conv2dDims {
  int B, Ci, H, W, Co, kh, kw, Ho, Wo;
  bool has_bias;
};

Conv2dDims conv2d_dims(const std::vector<Tensor>& ins, const Attrs& a) {
  require(ins.size() == 2 || ins.size() == 3, Op::Conv2d, "expects (x, w[, bias])");
  const auto& xs = ins[0].shape();
  const auto& ws = ins[1].shape();
  require(xs.size() == 4, Op::Conv2d, "input must be [B,C,H,W], got " + shape_str(xs));
  require(ws.size() == 4, Op::Conv2d, "weight must be [Co,Ci,kh,kw], got " + shape_str(ws));
  require(xs[1] == ws[1], Op::Conv2d,
          "input channels " + std::to_string(xs[1]) + " vs weight " + std::to_string(ws[1]));
  Conv2dDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], 0, 0, ins.size() == 3};
  require(a.stride_h >= 1 && a.stride_w >= 1, Op::Conv2d, "stride must be >= 1");
  d.Ho = (d.H + 2 * a.pad_h - d.kh) / a.stride_h + 1;
  d.Wo = (d.W + 2 * a.pad_w - d.kw) / a.stride_w + 1;
  require(d.H + 2 * a.pad_h >= d.kh && d.W + 2 * a.pad_w >= d.kw, Op::Conv2d,
          "kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) + " exceeds padded input " +
              shape_str(xs));
  if (d.has_bias)
    require(ins[2].shape() == std::vector<int>{d.Co}, Op::Conv2d,
            "bias must be [Co]=" + std::to_string(d.Co) + ", got " + shape_str(ins[2].shape()));
  return d;
}

struct TConv2dDims {
  int B, Ci, H, W, Co, kh, kw, Ho, Wo;
  bool has_bias;
};

TConv2dDims tconv2d_dims(const std::vector<Tensor>& ins, const Attrs& a) {
  require(ins.size() == 2 || ins.size() == 3, Op::TransposedConv2d, "expects (x, w[, bias])");
  const auto& xs = ins[0].shape();
  const auto& ws = ins[1].shape();
  require(xs.size() == 4, Op::TransposedConv2d, "input must be [B,C,H,W], got " + shape_str(xs));
  require(ws.size() == 4, Op::TransposedConv2d,
          "weight must be [Ci,Co,kh,kw], got " + shape_str(ws));
  require(xs[1] == ws[0], Op::TransposedConv2d,
          "input channels " + std::to_string(xs[1]) + " vs weight " + std::to_string(ws[0]));
  TConv2dDims d{xs[0], xs[1], xs[2], xs[3], ws[1], ws[2], ws[3], 0, 0, ins.size() == 3};
  d.Ho = (d.H - 1) * a.stride_h - 2 * a.pad_h + d.kh;
  d.Wo = (d.W - 1) * a.stride_w - 2 * a.pad_w + d.kw;
  require(d.Ho >= 1 && d.Wo >= 1, Op::TransposedConv2d, "non-positive output size");
  if (d.has_bias)
    require(ins[2].shape() == std::vector<int>{d.Co}, Op::TransposedConv2d,
            "bias must be [Co]=" + std::to_string(d.Co));
  return d;
}

struct MatMulDims {
  int M, K, N;
  bool has_bias;
};

MatMulDims matmul_dims(const std::vector<Tensor>& ins, const Attrs& a) {
  require(ins.size() == 2 || ins.size() == 3, Op::MatMul, "expects (a, b[, bias])");
  const auto& as = ins[0].shape();
  const auto& bs = ins[1].shape();
  require(as.size() == 2 && bs.size() == 2, Op::MatMul,
          "operands must be rank 2, got " + shape_str(as) + " and " + shape_str(bs));
  MatMulDims d;
  d.M = a.trans_a ? as[1] : as[0];
  int ka = a.trans_a ? as[0] : as[1];
  int kb = a.trans_b ? bs[1] : bs[0];
  d.N = a.trans_b ? bs[0] : bs[1];
  require(ka == kb, Op::MatMul,
          "inner dims " + std::to_string(ka) + " vs " + std::to_string(kb) + " for " +
              shape_str(as) + " x " + shape_str(bs));
  d.K = ka;
  d.has_bias = ins.size() == 3;
  if (d.has_bias)
    require(ins[2].shape() == std::vector<int>{d.N}, Op::MatMul,
            "bias must be [N]=" + std::to_string(d.N) + ", got " + shape_str(ins[2].shape()));
  return d;
}

struct PoolDims {
  int B, C, H, W, Ho, Wo;
};

PoolDims avgpool_dims(const std::vector<Tensor>& ins, const Attrs& a) {
  require(ins.size() == 1, Op::AvgPool2d, "expects one input");
  const auto& xs = ins[0].shape();
  require(xs.size() == 4, Op::AvgPool2d, "input must be [B,C,H,W], got " + shape_str(xs));
  require(a.kernel_h >= 1 && a.kernel_w >= 1 && a.stride_h >= 1 && a.stride_w >= 1, Op::AvgPool2d,
          "kernel and stride must be >= 1");
  require((xs[2] - a.kernel_h) % a.stride_h == 0 && (xs[3] - a.kernel_w) % a.stride_w == 0 &&
              xs[2] >= a.kernel_h && xs[3] >= a.kernel_w,
          Op::AvgPool2d, "window does not tile input " + shape_str(xs));
  return {xs[0], xs[1], xs[2], xs[3], (xs[2] - a.kernel_h) / a.stride_h + 1,
          (xs[3] - a.kernel_w) / a.stride_w + 1};
}

struct GridDims {
  int B, C, H, W, Hc, Wc;
  bool batched;
};

GridDims grid_dims(const std::vector<Tensor>& ins) {
  require(ins.size() == 2, Op::GridSample, "expects (image, coords)");
  const auto& is = ins[0].shape();
  const auto& cs = ins[1].shape();
  if (is.size() == 4) {
    require(cs.size() == 4 && cs[1] == 2, Op::GridSample,
            "coords must be [B,2,H,W], got " + shape_str(cs));
    require(cs[0] == is[0], Op::GridSample, "batch mismatch " + shape_str(is) + " vs " + shape_str(cs));
    return {is[0], is[1], is[2], is[3], cs[2], cs[3], true};
  }
  require(is.size() == 3, Op::GridSample, "image must be rank 3 or 4, got " + shape_str(is));
  require(cs.size() == 3 && cs[0] == 2, Op::GridSample,
          "coords must be [2,H,W], got " + shape_str(cs));
  return {1, is[0], is[1], is[2], cs[1], cs[2], false};
}

void groupnorm_check(const std::vector<Tensor>& ins, const Attrs& a) {
  require(ins.size() == 1, Op::GroupNorm, "expects one input");
  const auto& xs = ins[0].shape();
  require(xs.size() == 4, Op::GroupNorm, "input must be [B,C,H,W], got " + shape_str(xs));
  require(a.groups >= 1 && xs[1] % a.groups == 0, Op::GroupNorm,
          std::to_string(a.groups) + " groups do not divide " + std::to_string(xs[1]) + " channels");
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::ScalarMul: return "scalar_mul";
    case Op::MatMul: return "matmul";
    case Op::Conv2d: return "conv2d";
    case Op::TransposedConv2d: return "transposed_conv2d";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::GroupNorm: return "group_norm";
    case Op::AvgPool2d: return "avg_pool2d";
    case Op::AdaptiveAvgPool2d: return "adaptive_avg_pool2d";
    case Op::Reshape: return "reshape";
    case Op::Concat: return "concat";
    case Op::L2Normalize: return "l2_normalize";
    case Op::Dot: return "dot";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Softmax: return "softmax";
    case Op::GridSample: return "grid_sample";
  }
  return "?";
}

std::vector<int> op_output_shape(Op op, const std::vector<Tensor>& ins, const Attrs& attrs) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
      require(ins.size() == 2, op, "expects two inputs");
      require(ins[0].shape() == ins[1].shape(), op,
              "shape mismatch " + shape_str(ins[0].shape()) + " vs " + shape_str(ins[1].shape()));
      return ins[0].shape();
    case Op::ScalarMul:
    case Op::LeakyRelu:
    case Op::Square:
    case Op::Sqrt:
    case Op::Log:
    case Op::Exp:
      require(ins.size() == 1, op, "expects one input");
      return ins[0].shape();
    case Op::Softmax:
    case Op::L2Normalize:
      require(ins.size() == 1, op, "expects one input");
      axis_view(ins[0].shape(), attrs.axis, op);
      return ins[0].shape();
    case Op::GroupNorm:
      groupnorm_check(ins, attrs);
      return ins[0].shape();
    case Op::MatMul: {
      MatMulDims d = matmul_dims(ins, attrs);
      return {d.M, d.N};
    }
    case Op::Conv2d: {
      Conv2dDims d = conv2d_dims(ins, attrs);
      return {d.B, d.Co, d.Ho, d.Wo};
    }
    case Op::TransposedConv2d: {
      TConv2dDims d = tconv2d_dims(ins, attrs);
      return {d.B, d.Co, d.Ho, d.Wo};
    }
    case Op::AvgPool2d: {
      PoolDims d = avgpool_dims(ins, attrs);
      return {d.B, d.C, d.Ho, d.Wo};
    }
    case Op::AdaptiveAvgPool2d: {
      require(ins.size() == 1, op, "expects one input");
      const auto& xs = ins[0].shape();
      require(xs.size() == 4, op, "input must be [B,C,H,W], got " + shape_str(xs));
      require(attrs.out_h >= 1 && attrs.out_w >= 1 && attrs.out_h <= xs[2] && attrs.out_w <= xs[3],
              op, "output size out of range");
      return {xs[0], xs[1], attrs.out_h, attrs.out_w};
    }
    case Op::Reshape: {
      require(ins.size() == 1, op, "expects one input");
      require(shape_numel(attrs.target_shape) == ins[0].numel(), op,
              "cannot reshape " + shape_str(ins[0].shape()) + " to " +
                  shape_str(attrs.target_shape));
      return attrs.target_shape;
    }
    case Op::Concat: {
      require(ins.size() >= 2, op, "expects at least two inputs");
      std::vector<int> out = ins[0].shape();
      int axis = attrs.axis;
      require(axis >= 0 && axis < static_cast<int>(out.size()), op, "axis out of range");
      for (size_t i = 1; i < ins.size(); ++i) {
        const auto& s = ins[i].shape();
        require(s.size() == out.size(), op, "rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
          if (static_cast<int>(d) != axis)
            require(s[d] == out[d], op,
                    "dim " + std::to_string(d) + " mismatch " + shape_str(ins[0].shape()) +
                        " vs " + shape_str(s));
        out[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
      }
      return out;
    }
    case Op::Dot:
      require(ins.size() == 2, op, "expects two inputs");
      require(ins[0].rank() == 1 && ins[1].rank() == 1 && ins[0].numel() == ins[1].numel(), op,
              "expects equal-length vectors, got " + shape_str(ins[0].shape()) + " and " +
                  shape_str(ins[1].shape()));
      return {};
    case Op::Sum:
    case Op::Mean:
      require(ins.size() == 1, op, "expects one input");
      return {};
    case Op::GridSample: {
      GridDims d = grid_dims(ins);
      if (d.batched) return {d.B, d.C, d.Hc, d.Wc};
      return {d.C, d.Hc, d.Wc};
    }
  }
  fail("gradcore", "unhandled op");
}

// ---- forward kernels -----------------------------------------------------

void op_forward(Op op, const std::vector<Tensor>& ins, const Attrs& attrs, Tensor& out) {
  std::vector<double>& y = out.data();
  switch (op) {
    case Op::Add: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
      return;
    }
    case Op::Sub: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
      return;
    }
    case Op::Mul: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
      return;
    }
    case Op::ScalarMul: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = attrs.scalar * a[i];
      return;
    }
    case Op::LeakyRelu: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = a[i] >= 0.0 ? a[i] : attrs.slope * a[i];
      return;
    }
    case Op::Square: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = a[i] * a[i];
      return;
    }
    case Op::Sqrt: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) {
        if (a[i] < kDomainEps)
          fail_invalid("gradcore", "sqrt: argument " + std::to_string(a[i]) + " below domain eps");
        y[i] = std::sqrt(a[i]);
      }
      return;
    }
    case Op::Log: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) {
        if (a[i] < kDomainEps)
          fail_invalid("gradcore", "log: argument " + std::to_string(a[i]) + " below domain eps");
        y[i] = std::log(a[i]);
      }
      return;
    }
    case Op::Exp: {
      const auto& a = ins[0].data();
      for (size_t i = 0; i < y.size(); ++i) y[i] = std::exp(a[i]);
      return;
    }
    case Op::Sum: {
      double s = 0.0;
      for (double v : ins[0].data()) s += v;
      y[0] = s;
      return;
    }
    case Op::Mean: {
      double s = 0.0;
      for (double v : ins[0].data()) s += v;
      y[0] = s / static_cast<double>(ins[0].numel());
      return;
    }
    case Op::Dot: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      double s = 0.0;
      for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      y[0] = s;
      return;
    }
    case Op::Reshape: {
      y = ins[0].data();
      return;
    }
    case Op::Concat: {
      int axis = attrs.axis;
      const auto& os = out.shape();
      int64_t outer = prod_range(os, 0, static_cast<size_t>(axis));
      int64_t inner = prod_range(os, static_cast<size_t>(axis) + 1, os.size());
      int64_t out_axis = os[static_cast<size_t>(axis)];
      int64_t off = 0;
      for (const Tensor& t : ins) {
        int64_t ta = t.shape()[static_cast<size_t>(axis)];
        const auto& a = t.data();
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = a.data() + o * ta * inner;
          double* dst = y.data() + (o * out_axis + off) * inner;
          std::copy(src, src + ta * inner, dst);
        }
        off += ta;
      }
      return;
    }
    case Op::Softmax: {
      AxisView v = axis_view(ins[0].shape(), attrs.axis, op);
      const auto& a = ins[0].data();
      for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t j = 0; j < v.inner; ++j) {
          int64_t base = o * v.n * v.inner + j;
          double m = a[static_cast<size_t>(base)];
          for (int64_t i = 1; i < v.n; ++i)
            m = std::max(m, a[static_cast<size_t>(base + i * v.inner)]);
          double z = 0.0;
          for (int64_t i = 0; i < v.n; ++i) {
            double e = std::exp(a[static_cast<size_t>(base + i * v.inner)] - m);
            y[static_cast<size_t>(base + i * v.inner)] = e;
            z += e;
          }
          for (int64_t i = 0; i < v.n; ++i) y[static_cast<size_t>(base + i * v.inner)] /= z;
        }
      return;
    }
    case Op::L2Normalize: {
      AxisView v = axis_view(ins[0].shape(), attrs.axis, op);
      const auto& a = ins[0].data();
      for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t j = 0; j < v.inner; ++j) {
          int64_t base = o * v.n * v.inner + j;
          double ss = 0.0;
          for (int64_t i = 0; i < v.n; ++i) {
            double x = a[static_cast<size_t>(base + i * v.inner)];
            ss += x * x;
          }
          double d = std::max(std::sqrt(ss), attrs.eps);
          for (int64_t i = 0; i < v.n; ++i)
            y[static_cast<size_t>(base + i * v.inner)] =
                a[static_cast<size_t>(base + i * v.inner)] / d;
        }
      return;
    }
    case Op::GroupNorm: {
      const auto& xs = ins[0].shape();
      const auto& a = ins[0].data();
      int B = xs[0], C = xs[1], HW = xs[2] * xs[3];
      int cg = C / attrs.groups;
      int64_t m = static_cast<int64_t>(cg) * HW;
      for (int b = 0; b < B; ++b)
        for (int g = 0; g < attrs.groups; ++g) {
          int64_t base = (static_cast<int64_t>(b) * C + static_cast<int64_t>(g) * cg) * HW;
          double mu = 0.0;
          for (int64_t i = 0; i < m; ++i) mu += a[static_cast<size_t>(base + i)];
          mu /= static_cast<double>(m);
          double var = 0.0;
          for (int64_t i = 0; i < m; ++i) {
            double d = a[static_cast<size_t>(base + i)] - mu;
            var += d * d;
          }
          var /= static_cast<double>(m);
          double s = std::sqrt(var + attrs.eps);
          for (int64_t i = 0; i < m; ++i)
            y[static_cast<size_t>(base + i)] = (a[static_cast<size_t>(base + i)] - mu) / s;
        }
      return;
    }
    case Op::MatMul: {
      MatMulDims d = matmul_dims(ins, attrs);
      const auto &a = ins[0].data(), &b = ins[1].data();
      const double* bias = d.has_bias ? ins[2].data().data() : nullptr;
      for (int mI = 0; mI < d.M; ++mI)
        for (int n = 0; n < d.N; ++n) {
          double s = bias ? bias[n] : 0.0;
          for (int k = 0; k < d.K; ++k) {
            double av = attrs.trans_a ? a[static_cast<size_t>(k) * d.M + mI]
                                      : a[static_cast<size_t>(mI) * d.K + k];
            double bv = attrs.trans_b ? b[static_cast<size_t>(n) * d.K + k]
                                      : b[static_cast<size_t>(k) * d.N + n];
            s += av * bv;
          }
          y[static_cast<size_t>(mI) * d.N + n] = s;
        }
      return;
    }
    case Op::AvgPool2d: {
      PoolDims d = avgpool_dims(ins, attrs);
      const auto& a = ins[0].data();
      double inv = 1.0 / (attrs.kernel_h * attrs.kernel_w);
      for (int b = 0; b < d.B; ++b)
        for (int c = 0; c < d.C; ++c) {
          int64_t pb = (static_cast<int64_t>(b) * d.C + c) * d.H * d.W;
          int64_t ob = (static_cast<int64_t>(b) * d.C + c) * d.Ho * d.Wo;
          for (int ho = 0; ho < d.Ho; ++ho)
            for (int wo = 0; wo < d.Wo; ++wo) {
              double s = 0.0;
              for (int kh = 0; kh < attrs.kernel_h; ++kh)
                for (int kw = 0; kw < attrs.kernel_w; ++kw)
                  s += a[static_cast<size_t>(pb + (ho * attrs.stride_h + kh) * d.W +
                                             wo * attrs.stride_w + kw)];
              y[static_cast<size_t>(ob + ho * d.Wo + wo)] = s * inv;
            }
        }
      return;
    }
    case Op::AdaptiveAvgPool2d: {
      const auto& xs = ins[0].shape();
      const auto& a = ins[0].data();
      int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          int64_t pb = (static_cast<int64_t>(b) * C + c) * H * W;
          int64_t ob = (static_cast<int64_t>(b) * C + c) * attrs.out_h * attrs.out_w;
          for (int oh = 0; oh < attrs.out_h; ++oh) {
            int h0 = oh * H / attrs.out_h, h1 = ((oh + 1) * H + attrs.out_h - 1) / attrs.out_h;
            for (int ow = 0; ow < attrs.out_w; ++ow) {
              int w0 = ow * W / attrs.out_w, w1 = ((ow + 1) * W + attrs.out_w - 1) / attrs.out_w;
              double s = 0.0;
              for (int h = h0; h < h1; ++h)
                for (int w = w0; w < w1; ++w) s += a[static_cast<size_t>(pb + h * W + w)];
              y[static_cast<size_t>(ob + oh * attrs.out_w + ow)] =
                  s / (static_cast<double>(h1 - h0) * (w1 - w0));
            }
          }
        }
      return;
    }
    case Op::Conv2d: {
      Conv2dDims d = conv2d_dims(ins, attrs);
      const auto &x = ins[0].data(), &w = ins[1].data();
      auto ih = conv_index_table(d.Ho, d.H, d.kh, attrs.stride_h, attrs.pad_h, attrs.pad_mode);
      auto iw = conv_index_table(d.Wo, d.W, d.kw, attrs.stride_w, attrs.pad_w, attrs.pad_mode);
      std::fill(y.begin(), y.end(), 0.0);
      if (d.has_bias) {
        const auto& bias = ins[2].data();
        for (int b = 0; b < d.B; ++b)
          for (int co = 0; co < d.Co; ++co) {
            double* dst = y.data() + ((static_cast<int64_t>(b) * d.Co + co) * d.Ho) * d.Wo;
            for (int64_t i = 0; i < static_cast<int64_t>(d.Ho) * d.Wo; ++i) dst[i] = bias[co];
          }
      }
      for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co) {
          double* yb = y.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
          for (int ci = 0; ci < d.Ci; ++ci) {
            const double* xb = x.data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W;
            const double* wb =
                w.data() + (static_cast<int64_t>(co) * d.Ci + ci) * d.kh * d.kw;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int* ihrow = ih.data() + static_cast<size_t>(kh) * d.Ho;
              for (int kw = 0; kw < d.kw; ++kw) {
                double wv = wb[kh * d.kw + kw];
                if (wv == 0.0) continue;
                const int* iwrow = iw.data() + static_cast<size_t>(kw) * d.Wo;
                for (int ho = 0; ho < d.Ho; ++ho) {
                  int hi = ihrow[ho];
                  if (hi < 0) continue;
                  const double* xrow = xb + static_cast<int64_t>(hi) * d.W;
                  double* yrow = yb + static_cast<int64_t>(ho) * d.Wo;
                  for (int wo = 0; wo < d.Wo; ++wo) {
                    int wi = iwrow[wo];
                    if (wi >= 0) yrow[wo] += wv * xrow[wi];
                  }
                }
              }
            }
          }
        }
      return;
    }
    case Op::TransposedConv2d: {
      TConv2dDims d = tconv2d_dims(ins, attrs);
      const auto &x = ins[0].data(), &w = ins[1].data();
      auto oh = tconv_index_table(d.H, d.Ho, d.kh, attrs.stride_h, attrs.pad_h, attrs.pad_mode);
      auto ow = tconv_index_table(d.W, d.Wo, d.kw, attrs.stride_w, attrs.pad_w, attrs.pad_mode);
      std::fill(y.begin(), y.end(), 0.0);
      if (d.has_bias) {
        const auto& bias = ins[2].data();
        for (int b = 0; b < d.B; ++b)
          for (int co = 0; co < d.Co; ++co) {
            double* dst = y.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
            for (int64_t i = 0; i < static_cast<int64_t>(d.Ho) * d.Wo; ++i) dst[i] = bias[co];
          }
      }
      for (int b = 0; b < d.B; ++b)
        for (int ci = 0; ci < d.Ci; ++ci) {
          const double* xb = x.data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W;
          for (int co = 0; co < d.Co; ++co) {
            double* yb = y.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
            const double* wb =
                w.data() + (static_cast<int64_t>(ci) * d.Co + co) * d.kh * d.kw;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int* ohrow = oh.data() + static_cast<size_t>(kh) * d.H;
              for (int kw = 0; kw < d.kw; ++kw) {
                double wv = wb[kh * d.kw + kw];
                if (wv == 0.0) continue;
                const int* owrow = ow.data() + static_cast<size_t>(kw) * d.W;
                for (int h = 0; h < d.H; ++h) {
                  int o1 = ohrow[h];
                  if (o1 < 0) continue;
                  const double* xrow = xb + static_cast<int64_t>(h) * d.W;
                  double* yrow = yb + static_cast<int64_t>(o1) * d.Wo;
                  for (int wI = 0; wI < d.W; ++wI) {
                    int o2 = owrow[wI];
                    if (o2 >= 0) yrow[o2] += wv * xrow[wI];
                  }
                }
              }
            }
          }
        }
      return;
    }
    case Op::GridSample: {
      GridDims d = grid_dims(ins);
      const auto &img = ins[0].data(), &g = ins[1].data();
      int64_t isz = static_cast<int64_t>(d.H) * d.W;
      int64_t csz = static_cast<int64_t>(d.Hc) * d.Wc;
      for (int b = 0; b < d.B; ++b) {
        const double* gy = g.data() + static_cast<int64_t>(b) * 2 * csz;
        const double* gx = gy + csz;
        for (int c = 0; c < d.C; ++c) {
          const double* ib = img.data() + (static_cast<int64_t>(b) * d.C + c) * isz;
          double* yb = y.data() + (static_cast<int64_t>(b) * d.C + c) * csz;
          for (int64_t p = 0; p < csz; ++p) {
            double fy = gy[p], fx = gx[p];
            double y0f = std::floor(fy), x0f = std::floor(fx);
            double ay = fy - y0f, ax = fx - x0f;
            int y0 = wrap_index(static_cast<int>(y0f), d.H);
            int y1 = y0 + 1 == d.H ? 0 : y0 + 1;
            int x0 = wrap_index(static_cast<int>(x0f), d.W);
            int x1 = x0 + 1 == d.W ? 0 : x0 + 1;
            yb[p] = (1.0 - ay) * ((1.0 - ax) * ib[static_cast<int64_t>(y0) * d.W + x0] +
                                  ax * ib[static_cast<int64_t>(y0) * d.W + x1]) +
                    ay * ((1.0 - ax) * ib[static_cast<int64_t>(y1) * d.W + x0] +
                          ax * ib[static_cast<int64_t>(y1) * d.W + x1]);
          }
        }
      }
      return;
    }
  }
  fail("gradcore", "unhandled op in forward");
}

// ---- vector-Jacobian products ---------------------------------------------

void op_vjp(Op op, const std::vector<Tensor>& ins, const Attrs& attrs, const Tensor& out,
            const std::vector<double>& gout, const std::vector<std::vector<double>*>& gins) {
  auto g0 = gins.size() > 0 ? gins[0] : nullptr;
  auto g1 = gins.size() > 1 ? gins[1] : nullptr;
  auto g2 = gins.size() > 2 ? gins[2] : nullptr;
  switch (op) {
    case Op::Add: {
      if (g0)
        for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i];
      if (g1)
        for (size_t i = 0; i < gout.size(); ++i) (*g1)[i] += gout[i];
      return;
    }
    case Op::Sub: {
      if (g0)
        for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i];
      if (g1)
        for (size_t i = 0; i < gout.size(); ++i) (*g1)[i] -= gout[i];
      return;
    }
    case Op::Mul: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      if (g0)
        for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i] * b[i];
      if (g1)
        for (size_t i = 0; i < gout.size(); ++i) (*g1)[i] += gout[i] * a[i];
      return;
    }
    case Op::ScalarMul: {
      if (g0)
        for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += attrs.scalar * gout[i];
      return;
    }
    case Op::LeakyRelu: {
      if (!g0) return;
      const auto& a = ins[0].data();
      for (size_t i = 0; i < gout.size(); ++i)
        (*g0)[i] += (a[i] >= 0.0 ? 1.0 : attrs.slope) * gout[i];
      return;
    }
    case Op::Square: {
      if (!g0) return;
      const auto& a = ins[0].data();
      for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += 2.0 * a[i] * gout[i];
      return;
    }
    case Op::Sqrt: {
      if (!g0) return;
      const auto& y = out.data();
      for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i] / (2.0 * y[i]);
      return;
    }
    case Op::Log: {
      if (!g0) return;
      const auto& a = ins[0].data();
      for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i] / a[i];
      return;
    }
    case Op::Exp: {
      if (!g0) return;
      const auto& y = out.data();
      for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i] * y[i];
      return;
    }
    case Op::Sum: {
      if (!g0) return;
      for (size_t i = 0; i < g0->size(); ++i) (*g0)[i] += gout[0];
      return;
    }
    case Op::Mean: {
      if (!g0) return;
      double s = gout[0] / static_cast<double>(ins[0].numel());
      for (size_t i = 0; i < g0->size(); ++i) (*g0)[i] += s;
      return;
    }
    case Op::Dot: {
      const auto &a = ins[0].data(), &b = ins[1].data();
      if (g0)
        for (size_t i = 0; i < a.size(); ++i) (*g0)[i] += gout[0] * b[i];
      if (g1)
        for (size_t i = 0; i < a.size(); ++i) (*g1)[i] += gout[0] * a[i];
      return;
    }
    case Op::Reshape: {
      if (!g0) return;
      for (size_t i = 0; i < gout.size(); ++i) (*g0)[i] += gout[i];
      return;
    }
    case Op::Concat: {
      int axis = attrs.axis;
      const auto& os = out.shape();
      int64_t outer = prod_range(os, 0, static_cast<size_t>(axis));
      int64_t inner = prod_range(os, static_cast<size_t>(axis) + 1, os.size());
      int64_t out_axis = os[static_cast<size_t>(axis)];
      int64_t off = 0;
      for (size_t t = 0; t < ins.size(); ++t) {
        int64_t ta = ins[t].shape()[static_cast<size_t>(axis)];
        if (gins[t]) {
          for (int64_t o = 0; o < outer; ++o) {
            const double* src = gout.data() + (o * out_axis + off) * inner;
            double* dst = gins[t]->data() + o * ta * inner;
            for (int64_t i = 0; i < ta * inner; ++i) dst[i] += src[i];
          }
        }
        off += ta;
      }
      return;
    }
    case Op::Softmax: {
      if (!g0) return;
      AxisView v = axis_view(ins[0].shape(), attrs.axis, op);
      const auto& y = out.data();
      for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t j = 0; j < v.inner; ++j) {
          int64_t base = o * v.n * v.inner + j;
          double dot = 0.0;
          for (int64_t i = 0; i < v.n; ++i) {
            size_t k = static_cast<size_t>(base + i * v.inner);
            dot += gout[k] * y[k];
          }
          for (int64_t i = 0; i < v.n; ++i) {
            size_t k = static_cast<size_t>(base + i * v.inner);
            (*g0)[k] += y[k] * (gout[k] - dot);
          }
        }
      return;
    }
    case Op::L2Normalize: {
      if (!g0) return;
      AxisView v = axis_view(ins[0].shape(), attrs.axis, op);
      const auto& a = ins[0].data();
      const auto& y = out.data();
      for (int64_t o = 0; o < v.outer; ++o)
        for (int64_t j = 0; j < v.inner; ++j) {
          int64_t base = o * v.n * v.inner + j;
          double ss = 0.0;
          for (int64_t i = 0; i < v.n; ++i) {
            double x = a[static_cast<size_t>(base + i * v.inner)];
            ss += x * x;
          }
          double norm = std::sqrt(ss);
          if (norm > attrs.eps) {
            double dot = 0.0;
            for (int64_t i = 0; i < v.n; ++i) {
              size_t k = static_cast<size_t>(base + i * v.inner);
              dot += gout[k] * y[k];
            }
            for (int64_t i = 0; i < v.n; ++i) {
              size_t k = static_cast<size_t>(base + i * v.inner);
              (*g0)[k] += (gout[k] - y[k] * dot) / norm;
            }
          } else {
            for (int64_t i = 0; i < v.n; ++i) {
              size_t k = static_cast<size_t>(base + i * v.inner);
              (*g0)[k] += gout[k] / attrs.eps;
            }
          }
        }
      return;
    }
    case Op::GroupNorm: {
      if (!g0) return;
      const auto& xs = ins[0].shape();
      const auto& a = ins[0].data();
      const auto& y = out.data();
      int B = xs[0], C = xs[1], HW = xs[2] * xs[3];
      int cg = C / attrs.groups;
      int64_t m = static_cast<int64_t>(cg) * HW;
      double invm = 1.0 / static_cast<double>(m);
      for (int b = 0; b < B; ++b)
        for (int g = 0; g < attrs.groups; ++g) {
          int64_t base = (static_cast<int64_t>(b) * C + static_cast<int64_t>(g) * cg) * HW;
          double mu = 0.0;
          for (int64_t i = 0; i < m; ++i) mu += a[static_cast<size_t>(base + i)];
          mu *= invm;
          double var = 0.0;
          for (int64_t i = 0; i < m; ++i) {
            double d = a[static_cast<size_t>(base + i)] - mu;
            var += d * d;
          }
          var *= invm;
          double s = std::sqrt(var + attrs.eps);
          double gmean = 0.0, gxmean = 0.0;
          for (int64_t i = 0; i < m; ++i) {
            size_t k = static_cast<size_t>(base + i);
            gmean += gout[k];
            gxmean += gout[k] * y[k];
          }
          gmean *= invm;
          gxmean *= invm;
          for (int64_t i = 0; i < m; ++i) {
            size_t k = static_cast<size_t>(base + i);
            (*g0)[k] += (gout[k] - gmean - y[k] * gxmean) / s;
          }
        }
      return;
    }
    case Op::MatMul: {
      MatMulDims d = matmul_dims(ins, attrs);
      const auto &a = ins[0].data(), &b = ins[1].data();
      if (g0) {
        for (int mI = 0; mI < d.M; ++mI)
          for (int k = 0; k < d.K; ++k) {
            double s = 0.0;
            for (int n = 0; n < d.N; ++n) {
              double bv = attrs.trans_b ? b[static_cast<size_t>(n) * d.K + k]
                                        : b[static_cast<size_t>(k) * d.N + n];
              s += gout[static_cast<size_t>(mI) * d.N + n] * bv;
            }
            size_t ai = attrs.trans_a ? static_cast<size_t>(k) * d.M + mI
                                      : static_cast<size_t>(mI) * d.K + k;
            (*g0)[ai] += s;
          }
      }
      if (g1) {
        for (int k = 0; k < d.K; ++k)
          for (int n = 0; n < d.N; ++n) {
            double s = 0.0;
            for (int mI = 0; mI < d.M; ++mI) {
              double av = attrs.trans_a ? a[static_cast<size_t>(k) * d.M + mI]
                                        : a[static_cast<size_t>(mI) * d.K + k];
              s += gout[static_cast<size_t>(mI) * d.N + n] * av;
            }
            size_t bi = attrs.trans_b ? static_cast<size_t>(n) * d.K + k
                                      : static_cast<size_t>(k) * d.N + n;
            (*g1)[bi] += s;
          }
      }
      if (g2) {
        for (int n = 0; n < d.N; ++n) {
          double s = 0.0;
          for (int mI = 0; mI < d.M; ++mI) s += gout[static_cast<size_t>(mI) * d.N + n];
          (*g2)[static_cast<size_t>(n)] += s;
        }
      }
      return;
    }
    case Op::AvgPool2d: {
      if (!g0) return;
      PoolDims d = avgpool_dims(ins, attrs);
      double inv = 1.0 / (attrs.kernel_h * attrs.kernel_w);
      for (int b = 0; b < d.B; ++b)
        for (int c = 0; c < d.C; ++c) {
          int64_t pb = (static_cast<int64_t>(b) * d.C + c) * d.H * d.W;
          int64_t ob = (static_cast<int64_t>(b) * d.C + c) * d.Ho * d.Wo;
          for (int ho = 0; ho < d.Ho; ++ho)
            for (int wo = 0; wo < d.Wo; ++wo) {
              double gv = gout[static_cast<size_t>(ob + ho * d.Wo + wo)] * inv;
              for (int kh = 0; kh < attrs.kernel_h; ++kh)
                for (int kw = 0; kw < attrs.kernel_w; ++kw)
                  (*g0)[static_cast<size_t>(pb + (ho * attrs.stride_h + kh) * d.W +
                                            wo * attrs.stride_w + kw)] += gv;
            }
        }
      return;
    }
    case Op::AdaptiveAvgPool2d: {
      if (!g0) return;
      const auto& xs = ins[0].shape();
      int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          int64_t pb = (static_cast<int64_t>(b) * C + c) * H * W;
          int64_t ob = (static_cast<int64_t>(b) * C + c) * attrs.out_h * attrs.out_w;
          for (int oh = 0; oh < attrs.out_h; ++oh) {
            int h0 = oh * H / attrs.out_h, h1 = ((oh + 1) * H + attrs.out_h - 1) / attrs.out_h;
            for (int ow = 0; ow < attrs.out_w; ++ow) {
              int w0 = ow * W / attrs.out_w, w1 = ((ow + 1) * W + attrs.out_w - 1) / attrs.out_w;
              double gv = gout[static_cast<size_t>(ob + oh * attrs.out_w + ow)] /
                          (static_cast<double>(h1 - h0) * (w1 - w0));
              for (int h = h0; h < h1; ++h)
                for (int w = w0; w < w1; ++w) (*g0)[static_cast<size_t>(pb + h * W + w)] += gv;
            }
          }
        }
      return;
    }
    case Op::Conv2d: {
      Conv2dDims d = conv2d_dims(ins, attrs);
      const auto &x = ins[0].data(), &w = ins[1].data();
      auto ih = conv_index_table(d.Ho, d.H, d.kh, attrs.stride_h, attrs.pad_h, attrs.pad_mode);
      auto iw = conv_index_table(d.Wo, d.W, d.kw, attrs.stride_w, attrs.pad_w, attrs.pad_mode);
      for (int b = 0; b < d.B; ++b)
        for (int co = 0; co < d.Co; ++co) {
          const double* gb = gout.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
          for (int ci = 0; ci < d.Ci; ++ci) {
            const double* xb = x.data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W;
            double* gxb = g0 ? g0->data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W
                             : nullptr;
            const double* wb = w.data() + (static_cast<int64_t>(co) * d.Ci + ci) * d.kh * d.kw;
            double* gwb = g1 ? g1->data() + (static_cast<int64_t>(co) * d.Ci + ci) * d.kh * d.kw
                             : nullptr;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int* ihrow = ih.data() + static_cast<size_t>(kh) * d.Ho;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int* iwrow = iw.data() + static_cast<size_t>(kw) * d.Wo;
                double wv = wb[kh * d.kw + kw];
                double gw_acc = 0.0;
                for (int ho = 0; ho < d.Ho; ++ho) {
                  int hi = ihrow[ho];
                  if (hi < 0) continue;
                  const double* grow = gb + static_cast<int64_t>(ho) * d.Wo;
                  const double* xrow = xb + static_cast<int64_t>(hi) * d.W;
                  double* gxrow = gxb ? gxb + static_cast<int64_t>(hi) * d.W : nullptr;
                  for (int wo = 0; wo < d.Wo; ++wo) {
                    int wi = iwrow[wo];
                    if (wi < 0) continue;
                    double gv = grow[wo];
                    if (gxrow) gxrow[wi] += wv * gv;
                    gw_acc += xrow[wi] * gv;
                  }
                }
                if (gwb) gwb[kh * d.kw + kw] += gw_acc;
              }
            }
          }
          if (g2) {
            double s = 0.0;
            for (int64_t i = 0; i < static_cast<int64_t>(d.Ho) * d.Wo; ++i) s += gb[i];
            (*g2)[static_cast<size_t>(co)] += s;
          }
        }
      return;
    }
    case Op::TransposedConv2d: {
      TConv2dDims d = tconv2d_dims(ins, attrs);
      const auto &x = ins[0].data(), &w = ins[1].data();
      auto oh = tconv_index_table(d.H, d.Ho, d.kh, attrs.stride_h, attrs.pad_h, attrs.pad_mode);
      auto ow = tconv_index_table(d.W, d.Wo, d.kw, attrs.stride_w, attrs.pad_w, attrs.pad_mode);
      for (int b = 0; b < d.B; ++b)
        for (int ci = 0; ci < d.Ci; ++ci) {
          const double* xb = x.data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W;
          double* gxb =
              g0 ? g0->data() + (static_cast<int64_t>(b) * d.Ci + ci) * d.H * d.W : nullptr;
          for (int co = 0; co < d.Co; ++co) {
            const double* gb = gout.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
            const double* wb = w.data() + (static_cast<int64_t>(ci) * d.Co + co) * d.kh * d.kw;
            double* gwb = g1 ? g1->data() + (static_cast<int64_t>(ci) * d.Co + co) * d.kh * d.kw
                             : nullptr;
            for (int kh = 0; kh < d.kh; ++kh) {
              const int* ohrow = oh.data() + static_cast<size_t>(kh) * d.H;
              for (int kw = 0; kw < d.kw; ++kw) {
                const int* owrow = ow.data() + static_cast<size_t>(kw) * d.W;
                double wv = wb[kh * d.kw + kw];
                double gw_acc = 0.0;
                for (int h = 0; h < d.H; ++h) {
                  int o1 = ohrow[h];
                  if (o1 < 0) continue;
                  const double* grow = gb + static_cast<int64_t>(o1) * d.Wo;
                  const double* xrow = xb + static_cast<int64_t>(h) * d.W;
                  double* gxrow = gxb ? gxb + static_cast<int64_t>(h) * d.W : nullptr;
                  for (int wI = 0; wI < d.W; ++wI) {
                    int o2 = owrow[wI];
                    if (o2 < 0) continue;
                    double gv = grow[o2];
                    if (gxrow) gxrow[wI] += wv * gv;
                    gw_acc += xrow[wI] * gv;
                  }
                }
                if (gwb) gwb[kh * d.kw + kw] += gw_acc;
              }
            }
          }
        }
      if (g2)
        for (int b = 0; b < d.B; ++b)
          for (int co = 0; co < d.Co; ++co) {
            const double* gb = gout.data() + (static_cast<int64_t>(b) * d.Co + co) * d.Ho * d.Wo;
            double s = 0.0;
            for (int64_t i = 0; i < static_cast<int64_t>(d.Ho) * d.Wo; ++i) s += gb[i];
            (*g2)[static_cast<size_t>(co)] += s;
          }
      return;
    }
    case Op::GridSample: {
      GridDims d = grid_dims(ins);
      const auto &img = ins[0].data(), &g = ins[1].data();
      int64_t isz = static_cast<int64_t>(d.H) * d.W;
      int64_t csz = static_cast<int64_t>(d.Hc) * d.Wc;
      for (int b = 0; b < d.B; ++b) {
        const double* gyc = g.data() + static_cast<int64_t>(b) * 2 * csz;
        const double* gxc = gyc + csz;
        double* ggy = g1 ? g1->data() + static_cast<int64_t>(b) * 2 * csz : nullptr;
        double* ggx = ggy ? ggy + csz : nullptr;
        for (int c = 0; c < d.C; ++c) {
          const double* ib = img.data() + (static_cast<int64_t>(b) * d.C + c) * isz;
          double* gib = g0 ? g0->data() + (static_cast<int64_t>(b) * d.C + c) * isz : nullptr;
          const double* gob = gout.data() + (static_cast<int64_t>(b) * d.C + c) * csz;
          for (int64_t p = 0; p < csz; ++p) {
            double gv = gob[p];
            if (gv == 0.0 && !g1) continue;
            double fy = gyc[p], fx = gxc[p];
            double y0f = std::floor(fy), x0f = std::floor(fx);
            double ay = fy - y0f, ax = fx - x0f;
            int y0 = wrap_index(static_cast<int>(y0f), d.H);
            int y1 = y0 + 1 == d.H ? 0 : y0 + 1;
            int x0 = wrap_index(static_cast<int>(x0f), d.W);
            int x1 = x0 + 1 == d.W ? 0 : x0 + 1;
            double v00 = ib[static_cast<int64_t>(y0) * d.W + x0];
            double v01 = ib[static_cast<int64_t>(y0) * d.W + x1];
            double v10 = ib[static_cast<int64_t>(y1) * d.W + x0];
            double v11 = ib[static_cast<int64_t>(y1) * d.W + x1];
            if (gib) {
              gib[static_cast<int64_t>(y0) * d.W + x0] += gv * (1.0 - ay) * (1.0 - ax);
              gib[static_cast<int64_t>(y0) * d.W + x1] += gv * (1.0 - ay) * ax;
              gib[static_cast<int64_t>(y1) * d.W + x0] += gv * ay * (1.0 - ax);
              gib[static_cast<int64_t>(y1) * d.W + x1] += gv * ay * ax;
            }
            if (ggy) {
              ggy[p] += gv * ((1.0 - ax) * (v10 - v00) + ax * (v11 - v01));
              ggx[p] += gv * ((1.0 - ay) * (v01 - v00) + ay * (v11 - v10));
            }
          }
        }
      }
      return;
    }
  }
  fail("gradcore", "unhandled op in vjp");
}

}  // namespace corld
