#pragma once

// Adam with decoupled weight decay, plus the cosine-annealed learning rate.

#include <cstdint>
#include <vector>

#include "core/networks.hpp"

namespace corld {

// eta0 * (1 + cos(pi t / total)) / 2; exactly eta0 at t = 0 and 0 at
// t = total. Training evaluates it at the start of each epoch.
double cosine_lr(double eta0, int64_t t, int64_t total);

class Adam {
 public:
  Adam(double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // One update from the parameters' grad slots. Parameters with
  // requires_grad == false are left untouched (no decay either); grads are
  // cleared afterwards. State rows are keyed by position in the set.
  void step(ParamSet& params, double lr);

  void reset() {
    m_.clear();
    v_.clear();
    t_ = 0;
  }

 private:
  double wd_, beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

}  // namespace corld
