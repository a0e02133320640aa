#pragma once

// Tensor: n-d float array handle with an optional gradient slot. Data is
// held in double and rounded through float per primitive in f32 mode; the
// dtype tag selects the mode and must be uniform across an expression.

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace corld {

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class Tensor {
 public:
  Tensor() = default;

  Tensor(std::vector<int> shape, Dtype dt, bool requires_grad = false) {
    validate_shape(shape);
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(shape_numel(impl_->shape)), 0.0);
    impl_->dtype = dt;
    impl_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, Dtype dt = Dtype::F64) {
    Tensor t(std::vector<int>{}, dt);
    t.data()[0] = round_mode(dt, v);
    return t;
  }

  static Tensor from(std::vector<int> shape, const std::vector<double>& vals, Dtype dt,
                     bool requires_grad = false) {
    Tensor t(std::move(shape), dt, requires_grad);
    if (vals.size() != t.data().size())
      fail_invalid("gradcore", "tensor data length " + std::to_string(vals.size()) +
                                   " does not match shape " + shape_str(t.shape()));
    for (size_t i = 0; i < vals.size(); ++i) t.data()[i] = round_mode(dt, vals[i]);
    return t;
  }

  static Tensor full(std::vector<int> shape, double v, Dtype dt, bool requires_grad = false) {
    Tensor t(std::move(shape), dt, requires_grad);
    double r = round_mode(dt, v);
    for (double& x : t.data()) x = r;
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }
  Dtype dtype() const { return impl_->dtype; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }

  bool has_grad() const { return impl_->grad_valid; }

  // Allocates a zero gradient buffer on first access.
  std::vector<double>& grad() {
    if (!impl_->grad_valid) {
      impl_->grad.assign(impl_->data.size(), 0.0);
      impl_->grad_valid = true;
    }
    return impl_->grad;
  }

  const std::vector<double>& grad() const {
    if (!impl_->grad_valid) fail("gradcore", "gradient not populated");
    return impl_->grad;
  }

  void zero_grad() {
    if (impl_->grad_valid) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  void drop_grad() {
    impl_->grad.clear();
    impl_->grad_valid = false;
  }

  double item() const {
    if (numel() != 1) fail_invalid("gradcore", "item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>(*impl_);
    return t;
  }

  Tensor astype(Dtype dt) const {
    Tensor t = clone();
    t.impl_->dtype = dt;
    if (dt == Dtype::F32)
      for (double& x : t.impl_->data) x = round_mode(dt, x);
    t.drop_grad();
    return t;
  }

  // Identity of the underlying buffer; used by the tape to key slots.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool grad_valid = false;
    Dtype dtype = Dtype::F64;
    bool requires_grad = false;
  };

  static void validate_shape(const std::vector<int>& shape) {
    for (int d : shape)
      if (d <= 0) fail_invalid("gradcore", "non-positive dimension in shape " + shape_str(shape));
  }

  std::shared_ptr<Impl> impl_;
};

// Row-major offset helper for tests and kernels.
inline int64_t flat_index(const std::vector<int>& shape, std::initializer_list<int> idx) {
  int64_t off = 0;
  size_t k = 0;
  for (int i : idx) {
    off = off * shape[k] + i;
    ++k;
  }
  return off;
}

}  // namespace corld
