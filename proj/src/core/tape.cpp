#include "core/tape.hpp"

#include <cmath>

namespace corld {

int Tape::slot_of(const Tensor& t, bool as_leaf) {
  auto it = index_.find(t.id());
  if (it != index_.end()) return it->second;
  if (!as_leaf) fail("gradcore", "tensor is not on this tape");
  int id = static_cast<int>(slots_.size());
  slots_.push_back(t);
  is_leaf_.push_back(1);
  needs_grad_.push_back(t.requires_grad() ? 1 : 0);
  index_.emplace(t.id(), id);
  return id;
}

Tensor Tape::apply(Op op, const std::vector<Tensor>& inputs, const Attrs& attrs) {
  if (consumed_) fail("gradcore", "tape already consumed by backward");
  if (inputs.empty()) fail_invalid("gradcore", std::string(op_name(op)) + ": no inputs");
  Dtype dt = inputs[0].dtype();
  for (const Tensor& t : inputs) {
    if (!t.defined()) fail_invalid("gradcore", std::string(op_name(op)) + ": undefined input");
    if (t.dtype() != dt)
      fail_invalid("gradcore", std::string(op_name(op)) + ": mixed float modes " +
                                   dtype_name(dt) + " and " + dtype_name(t.dtype()));
  }

  std::vector<int> out_shape = op_output_shape(op, inputs, attrs);

  Node node;
  node.op = op;
  node.attrs = attrs;
  node.in_ids.reserve(inputs.size());
  bool needs = false;
  for (const Tensor& t : inputs) {
    int id = slot_of(t, true);
    node.in_ids.push_back(id);
    needs = needs || needs_grad_[static_cast<size_t>(id)];
  }

  Tensor out(std::move(out_shape), dt);
  op_forward(op, inputs, attrs, out);
  for (double v : out.data())
    if (!std::isfinite(v))
      fail("gradcore", std::string(op_name(op)) + ": non-finite output value");
  if (dt == Dtype::F32)
    for (double& v : out.data()) v = round_mode(dt, v);

  node.out_id = static_cast<int>(slots_.size());
  slots_.push_back(out);
  is_leaf_.push_back(0);
  needs_grad_.push_back(needs ? 1 : 0);
  index_.emplace(out.id(), node.out_id);
  nodes_.push_back(std::move(node));
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) fail("gradcore", "tape already consumed by backward");
  auto it = index_.find(loss.id());
  if (it == index_.end()) fail_invalid("gradcore", "backward: loss not on tape");
  if (loss.numel() != 1) fail_invalid("gradcore", "backward: loss is not a scalar");
  int loss_id = it->second;

  std::vector<std::vector<double>> bufs(slots_.size());
  auto buf = [&](int id) -> std::vector<double>& {
    auto& b = bufs[static_cast<size_t>(id)];
    if (b.empty()) b.assign(static_cast<size_t>(slots_[static_cast<size_t>(id)].numel()), 0.0);
    return b;
  };
  buf(loss_id)[0] = 1.0;

  for (size_t ni = nodes_.size(); ni-- > 0;) {
    const Node& node = nodes_[ni];
    if (node.out_id > loss_id) continue;
    auto& gout = bufs[static_cast<size_t>(node.out_id)];
    if (gout.empty()) continue;
    std::vector<Tensor> inputs;
    inputs.reserve(node.in_ids.size());
    std::vector<std::vector<double>*> gins;
    gins.reserve(node.in_ids.size());
    for (int id : node.in_ids) {
      inputs.push_back(slots_[static_cast<size_t>(id)]);
      gins.push_back(needs_grad_[static_cast<size_t>(id)] ? &buf(id) : nullptr);
    }
    op_vjp(node.op, inputs, node.attrs, slots_[static_cast<size_t>(node.out_id)], gout, gins);
  }

  for (size_t id = 0; id < slots_.size(); ++id) {
    if (!is_leaf_[id] || !slots_[id].requires_grad()) continue;
    auto& b = bufs[id];
    if (b.empty()) continue;
    Tensor leaf = slots_[id];
    auto& g = leaf.grad();
    Dtype dt = leaf.dtype();
    for (size_t i = 0; i < g.size(); ++i) g[i] = round_mode(dt, g[i] + b[i]);
  }
  consumed_ = true;
}

void Tape::replay() {
  for (const Node& node : nodes_) {
    std::vector<Tensor> inputs;
    inputs.reserve(node.in_ids.size());
    for (int id : node.in_ids) inputs.push_back(slots_[static_cast<size_t>(id)]);
    Tensor& out = slots_[static_cast<size_t>(node.out_id)];
    op_forward(node.op, inputs, node.attrs, out);
    if (out.dtype() == Dtype::F32)
      for (double& v : out.data()) v = round_mode(Dtype::F32, v);
  }
}

Tensor Tape::flatten(const Tensor& a, int axis) {
  const auto& s = a.shape();
  if (axis < 0 || axis > a.rank())
    fail_invalid("gradcore", "flatten: axis " + std::to_string(axis) + " out of range");
  std::vector<int> target(s.begin(), s.begin() + axis);
  int64_t tail = 1;
  for (size_t i = static_cast<size_t>(axis); i < s.size(); ++i) tail *= s[i];
  target.push_back(static_cast<int>(tail));
  return reshape(a, std::move(target));
}

}  // namespace corld
