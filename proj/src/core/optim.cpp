#include "core/optim.hpp"

#include <cmath>

namespace corld {

double cosine_lr(double eta0, int64_t t, int64_t total) {
  if (total <= 0) fail_invalid("training", "cosine schedule needs a positive horizon");
  if (t < 0) t = 0;
  if (t > total) t = total;
  return eta0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(t) / static_cast<double>(total)));
}

void Adam::step(ParamSet& params, double lr) {
  if (m_.empty()) {
    m_.resize(params.items.size());
    v_.resize(params.items.size());
    for (size_t i = 0; i < params.items.size(); ++i) {
      size_t n = params.items[i].second.data().size();
      m_[i].assign(n, 0.0);
      v_[i].assign(n, 0.0);
    }
  }
  if (m_.size() != params.items.size())
    fail("training", "optimizer state does not match parameter set");
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.items.size(); ++i) {
    Tensor& p = params.items[i].second;
    if (!p.requires_grad()) continue;
    Dtype dt = p.dtype();
    auto& g = p.grad();  // zeros when backward never reached this leaf
    auto& m = m_[i];
    auto& v = v_[i];
    auto& x = p.data();
    for (size_t k = 0; k < x.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      double upd = lr * mhat / (std::sqrt(vhat) + eps_);
      if (wd_ > 0.0) upd += lr * wd_ * x[k];
      x[k] = round_mode(dt, x[k] - upd);
      m[k] = round_mode(dt, m[k]);
      v[k] = round_mode(dt, v[k]);
    }
    p.zero_grad();
  }
}

}  // namespace corld
